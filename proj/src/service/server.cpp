#include "dte/service/server.hpp"

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>

namespace dte::service {

namespace fs = std::filesystem;

namespace {

RunKind kind_from(const std::string& s) {
    if (s == "flexible") return RunKind::flexible;
    if (s == "curve") return RunKind::curve;
    return RunKind::assurance;
}

std::string random_id() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    char buf[40];
    std::snprintf(buf, sizeof buf, "job-%08x%04x", rd(), counter++ & 0xffffu);
    return buf;
}

}  // namespace

bool JobManager::valid_id(const std::string& id) {
    static const std::regex re("[A-Za-z0-9_.-]{1,64}");
    return std::regex_match(id, re) && id != "." && id != "..";
}

JobManager::JobManager(ServiceOptions opts) : opts_(std::move(opts)) {
    fs::create_directories(fs::path(opts_.state_dir) / "jobs");
    load();
    for (unsigned i = 0; i < std::max(1u, opts_.max_jobs); ++i) workers_.emplace_back([this] { worker(); });
}

JobManager::~JobManager() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
}

void JobManager::load() {
    for (const auto& entry : fs::directory_iterator(fs::path(opts_.state_dir) / "jobs")) {
        if (entry.path().extension() != ".json") continue;
        std::ifstream in(entry.path());
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception&) {
            continue;
        }
        Job job;
        job.id = j.value("job_id", "");
        if (!valid_id(job.id)) continue;
        job.kind = kind_from(j.value("kind", "assurance"));
        job.config = j.value("config", json::object());
        job.seed_generated = j.value("seed_generated", false);
        job.status = j.value("status", "queued");
        job.submitted_at = j.value("submitted_at", "");
        job.started_at = j.value("started_at", "");
        job.finished_at = j.value("finished_at", "");
        job.done = j.value("iterations_done", std::size_t{0});
        job.total = j.value("iterations_total", std::size_t{0});
        job.error = j.value("error", "");
        job.record = j.value("record", json());
        if (job.status == "queued" || job.status == "running") {
            job.status = "queued";
            job.done = 0;
            queue_.push_back(job.id);
        }
        jobs_.emplace(job.id, std::move(job));
    }
}

void JobManager::persist(const Job& j) const {
    json out = status_json(j);
    out["config"] = j.config;
    out["seed_generated"] = j.seed_generated;
    if (!j.record.is_null()) out["record"] = j.record;
    const fs::path dir = fs::path(opts_.state_dir) / "jobs";
    const fs::path tmp = dir / (j.id + ".json.tmp");
    {
        std::ofstream f(tmp);
        f << out.dump(2) << '\n';
    }
    fs::rename(tmp, dir / (j.id + ".json"));
}

json JobManager::status_json(const Job& j) const {
    json s = {{"job_id", j.id},
              {"kind", kind_name(j.kind)},
              {"status", j.status},
              {"iterations_done", j.done},
              {"iterations_total", j.total},
              {"partial_estimate", j.partial_estimate},
              {"submitted_at", j.submitted_at},
              {"started_at", j.started_at},
              {"finished_at", j.finished_at}};
    if (!j.error.empty()) s["error"] = j.error;
    return s;
}

std::string JobManager::submit(RunKind kind, const json& config, const std::string& id) {
    if (!id.empty() && !valid_id(id)) throw ConfigError("id", "job ids use [A-Za-z0-9_.-], at most 64 characters");
    if (config.is_object() && config.contains("control") && config["control"].is_object() &&
        config["control"].contains("csv"))
        throw ConfigError("$.control.csv", "not accepted by the service; fit via /api/control/fit and pass draws");
    const RunConfig cfg = parse_run_config(config, kind);

    Job job;
    job.kind = kind;
    job.config = cfg.raw;
    job.seed_generated = cfg.seed_generated;
    job.submitted_at = utc_timestamp();
    job.total = (cfg.grid.empty() ? 1 : cfg.grid.size()) * cfg.engine.iterations;
    {
        std::lock_guard lock(mu_);
        job.id = id.empty() ? random_id() : id;
        while (id.empty() && jobs_.count(job.id)) job.id = random_id();
        if (jobs_.count(job.id)) throw DuplicateJob("job '" + job.id + "' already exists");
        persist(job);
        queue_.push_back(job.id);
        jobs_.emplace(job.id, job);
    }
    cv_.notify_one();
    return job.id;
}

std::optional<json> JobManager::status(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return status_json(it->second);
}

json JobManager::list() const {
    std::lock_guard lock(mu_);
    json out = json::array();
    for (const auto& [id, job] : jobs_) out.push_back(status_json(job));
    return out;
}

std::optional<json> JobManager::record(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end() || it->second.status != "done") return std::nullopt;
    return it->second.record;
}

void JobManager::worker() {
    for (;;) {
        std::string id;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            id = queue_.front();
            queue_.pop_front();
        }
        run(id);
    }
}

void JobManager::run(const std::string& id) {
    json config;
    RunKind kind;
    bool seed_generated;
    {
        std::lock_guard lock(mu_);
        Job& j = jobs_.at(id);
        j.status = "running";
        j.started_at = utc_timestamp();
        config = j.config;
        kind = j.kind;
        seed_generated = j.seed_generated;
        persist(j);
    }
    try {
        const RunConfig cfg = parse_run_config(config, kind);
        const json results = run_engine(cfg, kind, opts_.threads_per_job,
                                         [&](std::size_t done, std::size_t total, double est) {
                                             std::lock_guard lock(mu_);
                                             Job& j = jobs_.at(id);
                                             j.done = done;
                                             j.total = total;
                                             j.partial_estimate = est;
                                         });
        std::lock_guard lock(mu_);
        Job& j = jobs_.at(id);
        j.finished_at = utc_timestamp();
        j.record = make_record(kind_name(kind), cfg.raw, cfg.seed, seed_generated, j.started_at, j.finished_at,
                               results);
        j.status = "done";
        j.done = j.total;
        persist(j);
    } catch (const std::exception& e) {
        std::lock_guard lock(mu_);
        Job& j = jobs_.at(id);
        j.finished_at = utc_timestamp();
        j.status = "failed";
        j.error = e.what();
        persist(j);
    }
}

// ---------------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg, const std::string& path = "") {
    json body = {{"error", msg}};
    if (!path.empty()) body["path"] = path;
    send_json(res, status, body);
}

// Runs `f` and maps failures to HTTP statuses.
template <class F>
void guarded(httplib::Response& res, F f) {
    try {
        f();
    } catch (const json::parse_error& e) {
        send_error(res, 400, std::string("invalid JSON: ") + e.what());
    } catch (const ConfigError& e) {
        send_error(res, 400, e.what(), e.path());
    } catch (const CsvError& e) {
        send_error(res, 400, e.what());
    } catch (const DuplicateJob& e) {
        send_error(res, 409, e.what());
    } catch (const std::invalid_argument& e) {
        send_error(res, 400, e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

}  // namespace

Server::Server(ServiceOptions opts)
    : jobs_(std::make_unique<JobManager>(std::move(opts))), http_(std::make_unique<httplib::Server>()) {
    routes();
}

Server::~Server() {
    stop();
}

int Server::bind(const std::string& host, int port) {
    if (port == 0) return http_->bind_to_any_port(host);
    if (!http_->bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void Server::listen() { http_->listen_after_bind(); }

void Server::stop() {
    if (http_) http_->stop();
}

void Server::routes() {
    auto& s = *http_;
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"version", kToolVersion}, {"schema_version", kSchemaVersion}});
    });

    s.Post("/api/prior/fit", [](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, run_prior_fit(json::parse(req.body))); });
    });

    s.Post("/api/control/fit", [](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, run_control_fit(json::parse(req.body))); });
    });

    auto submit = [this](RunKind kind) {
        return [this, kind](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.has_param("id") ? req.get_param_value("id") : "";
                const std::string job = jobs_->submit(kind, json::parse(req.body), id);
                send_json(res, 202, *jobs_->status(job));
            });
        };
    };
    s.Post("/api/assurance", submit(RunKind::assurance));
    s.Post("/api/assurance/flexible", submit(RunKind::flexible));

    s.Get("/api/jobs", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"jobs", jobs_->list()}});
    });

    s.Get(R"(/api/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto st = jobs_->status(req.matches[1]);
        if (!st) return send_error(res, 404, "unknown job");
        send_json(res, 200, *st);
    });

    s.Get(R"(/api/jobs/([^/]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto st = jobs_->status(id);
        if (!st) return send_error(res, 404, "unknown job");
        const std::string status = (*st)["status"];
        if (status == "done") return send_json(res, 200, *jobs_->record(id));
        if (status == "failed") return send_json(res, 500, *st);
        send_json(res, 202, *st);
    });
}

}  // namespace dte::service
