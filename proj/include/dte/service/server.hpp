#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dte/service/runner.hpp"

namespace httplib {
class Server;
}

namespace dte::service {

struct ServiceOptions {
    std::string state_dir = "dteassure-state";
    unsigned max_jobs = 2;          // jobs executing at once
    unsigned threads_per_job = 1;
};

class DuplicateJob : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/*
 * Asynchronous engine jobs. Each job is persisted to
 * <state_dir>/jobs/<id>.json on every state change; jobs found queued or
 * running at startup are queued again (runs are deterministic given the
 * stored config, which always carries its seed).
 */
class JobManager {
   public:
    explicit JobManager(ServiceOptions opts);
    ~JobManager();
    JobManager(const JobManager&) = delete;
    JobManager& operator=(const JobManager&) = delete;

    /// Validates the config (throws ConfigError) and queues it. `id` is
    /// generated when empty; throws DuplicateJob if it is already taken.
    std::string submit(RunKind kind, const json& config, const std::string& id = "");

    std::optional<json> status(const std::string& id) const;
    /// Status of every known job, ordered by id.
    json list() const;
    /// Full run record of a finished job.
    std::optional<json> record(const std::string& id) const;

    static bool valid_id(const std::string& id);

   private:
    struct Job {
        std::string id;
        RunKind kind;
        json config;   // with resolved seed
        bool seed_generated = false;
        std::string status = "queued";   // queued | running | done | failed
        std::string submitted_at, started_at, finished_at;
        std::size_t done = 0, total = 0;
        double partial_estimate = 0.0;
        std::string error;
        json record;
    };

    json status_json(const Job& j) const;
    void persist(const Job& j) const;
    void load();
    void worker();
    void run(const std::string& id);

    ServiceOptions opts_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::string, Job> jobs_;
    std::deque<std::string> queue_;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

/// JSON-over-HTTP front end on top of JobManager.
class Server {
   public:
    explicit Server(ServiceOptions opts);
    ~Server();

    /// Binds to host:port (port 0 picks a free one); returns the bound port.
    int bind(const std::string& host, int port);
    void listen();   // blocks until stop()
    void stop();

    JobManager& jobs() { return *jobs_; }

   private:
    void routes();
    std::unique_ptr<JobManager> jobs_;
    std::unique_ptr<httplib::Server> http_;
};

}  // namespace dte::service
