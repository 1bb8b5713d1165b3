#include <doctest.h>

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dte/service/server.hpp"

using namespace dte;
using namespace dte::service;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("dteassure-test-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

json worked_config() {
    return json::parse(R"({
      "schema_version": 1,
      "seed": 123,
      "iterations": 300,
      "recruitment": {"type": "uniform", "duration": 12},
      "grid": {"n_per_arm": [100, 200], "event_fraction": 0.8},
      "effect": {
        "p_separation": 0.9,
        "p_delay": 0.7,
        "delay": {"judgements": {"probabilities": [0.25, 0.5, 0.75], "quantiles": [3, 4, 5]}},
        "hazard_ratio": {"shape": 29.6, "rate": 47.8}
      },
      "test": {"kind": "fleming_harrington", "rho": 0, "gamma": 1},
      "control": {"fixed": {"rate": 0.074, "shape": 1.21}}
    })");
}

json single_config() {
    json c = worked_config();
    c.erase("grid");
    c["design"] = {{"n_control", 150}, {"n_experimental", 150}, {"events", 240}};
    return c;
}

std::string expect_config_error(const json& cfg, RunKind kind = RunKind::assurance) {
    try {
        parse_run_config(cfg, kind);
    } catch (const ConfigError& e) {
        return e.path();
    }
    FAIL("no ConfigError");
    return "";
}

std::string control_csv(std::uint64_t seed, std::size_t n) {
    const TrialDesign design(n, n, n, RecruitmentModel::uniform(12.0));
    RandomStream rng(seed);
    const auto data = simulate_trial(design, DTEModel::from_hazard_ratio(WeibullParams(0.074, 1.21), 0.0, 1.0), rng)
                          .to_survival_dataset();
    std::ostringstream out;
    write_ipd_csv(out, data.arm(Arm::control));
    return out.str();
}

json small_mcmc() { return {{"iterations", 3000}, {"burn_in", 1000}, {"thin", 2}}; }

}  // namespace

TEST_CASE("config: unknown and missing fields are reported with paths") {
    json c = single_config();
    c["effect"]["extra"] = 1;
    CHECK(expect_config_error(c) == "$.effect.extra");

    c = single_config();
    c["typo"] = true;
    CHECK(expect_config_error(c) == "$.typo");

    c = single_config();
    c["effect"].erase("p_delay");
    CHECK(expect_config_error(c) == "$.effect.p_delay");

    c = single_config();
    c["effect"]["p_separation"] = 1.5;
    CHECK(expect_config_error(c) == "$.effect.p_separation");

    c = single_config();
    c["design"]["events"] = 1000;
    CHECK(expect_config_error(c) == "$.design.events");

    c = single_config();
    c["iterations"] = 0;
    CHECK(expect_config_error(c) == "$.iterations");

    c = single_config();
    c["schema_version"] = 2;
    CHECK(expect_config_error(c) == "$.schema_version");

    c = single_config();
    c["test"]["kind"] = "max_combo";
    CHECK(expect_config_error(c) == "$.test.kind");

    c = single_config();
    c["effect"]["delay"] = {{"judgements", {{"probabilities", {0.5, 0.25, 0.75}}, {"quantiles", {3, 4, 5}}}}};
    CHECK(expect_config_error(c).rfind("$.effect.delay", 0) == 0);

    c = single_config();
    CHECK(expect_config_error(c, RunKind::curve) == "$.grid");

    c = single_config();
    c["flexible"] = json::object();
    CHECK(expect_config_error(c) == "$.flexible");
}

TEST_CASE("config: control source") {
    json c = single_config();
    c["control"] = {{"csv", {"/nonexistent/file.csv"}}};
    CHECK(expect_config_error(c) == "$.control.csv[0]");

    c["control"] = {{"posterior_file", "/nonexistent/post.json"}};
    CHECK(expect_config_error(c) == "$.control.posterior_file");

    c["control"] = json::object();
    CHECK(expect_config_error(c) == "$.control");

    c["control"] = {{"fixed", {{"rate", 0.074}, {"shape", 1.21}}}, {"draws", {{0.07, 1.2}}}};
    CHECK(expect_config_error(c) == "$.control");

    c["control"] = {{"draws", {{0.07, -1.0}}}};
    CHECK(expect_config_error(c) == "$.control.draws[0]");

    c["control"] = {{"draws", {{0.07, 1.2}, {0.08, 1.25}}}};
    CHECK_NOTHROW(parse_run_config(c, RunKind::assurance));
}

TEST_CASE("config: generated seed is echoed and the hash ignores the seed") {
    json c = single_config();
    c.erase("seed");
    const RunConfig a = parse_run_config(c, RunKind::assurance);
    CHECK(a.seed_generated);
    CHECK(a.raw.at("seed").get<std::uint64_t>() == a.seed);
    CHECK(a.seed < (std::uint64_t{1} << 53));

    const RunConfig b = parse_run_config(single_config(), RunKind::assurance);
    CHECK_FALSE(b.seed_generated);
    CHECK(b.seed == 123);
    CHECK(config_hash(a.raw) == config_hash(b.raw));

    json d = single_config();
    d["iterations"] = 301;
    CHECK(config_hash(d) != config_hash(single_config()));
    CHECK(config_hash(b.raw).rfind("fnv1a64:", 0) == 0);
    CHECK(config_hash(b.raw).size() == 8 + 16);
}

TEST_CASE("execute: record fields and byte-identical results") {
    const json r1 = execute(worked_config(), RunKind::curve, 1);
    const json r2 = execute(worked_config(), RunKind::curve, 3);
    CHECK(r1["results"].dump() == r2["results"].dump());
    CHECK(curve_csv(r1["results"]) == curve_csv(r2["results"]));
    for (const char* k : {"schema_version", "tool_version", "kind", "config_hash", "seed", "seed_generated",
                          "started_at", "finished_at", "config", "results"})
        CHECK(r1.contains(k));
    CHECK(r1["config_hash"] == config_hash(worked_config()));
    CHECK(r1["results"]["points"].size() == 2);

    json other = worked_config();
    other["seed"] = 124;
    const json r3 = execute(other, RunKind::curve, 1);
    CHECK(r3["config_hash"] == r1["config_hash"]);
    CHECK(r3["results"].dump() != r1["results"].dump());
}

TEST_CASE("execute: a single iteration gives 0 or 1") {
    json c = single_config();
    c["iterations"] = 1;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        c["seed"] = s;
        const double e = execute(c, RunKind::assurance, 1)["results"]["points"][0]["estimate"];
        CHECK((e == 0.0 || e == 1.0));
    }
}

TEST_CASE("execute: curve CSV layout") {
    const std::string csv = curve_csv(execute(worked_config(), RunKind::curve, 1)["results"]);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "n_c,n_e,E,estimate,mc_se,N");
    std::getline(in, line);
    CHECK(line.rfind("100,100,160,", 0) == 0);
    CHECK(line.substr(line.size() - 4) == ",300");
}

TEST_CASE("execute: flexible run") {
    json c = single_config();
    c["flexible"] = {{"curves", 200}};
    const json r = execute(c, RunKind::flexible, 1);
    CHECK(r["kind"] == "flexible");
    CHECK(r["results"]["flexible"]["curves"] == 200);
    const double e = r["results"]["points"][0]["estimate"];
    CHECK(e > 0.3);
    CHECK(e < 1.0);
    CHECK(execute(c, RunKind::flexible, 2)["results"].dump() == r["results"].dump());
}

TEST_CASE("prior fit: worked-example judgements") {
    const json r = run_prior_fit({{"schema_version", 1}, {"probabilities", {0.25, 0.5, 0.75}}, {"quantiles", {3, 4, 5}}});
    CHECK(r["shape"].get<double>() == doctest::Approx(7.29).epsilon(0.01));
    CHECK(r["rate"].get<double>() == doctest::Approx(1.76).epsilon(0.01));
    CHECK(r["feedback"].size() == 3);
    CHECK(r["feedback"][0]["fitted"].get<double>() == doctest::Approx(3.03).epsilon(0.01));

    try {
        run_prior_fit({{"schema_version", 1}, {"probabilities", {0.25, 0.5}}, {"quantiles", {3, 4, 5}}});
        FAIL("accepted mismatched lengths");
    } catch (const ConfigError&) {
    }
}

TEST_CASE("control fit: inline datasets, pooling and errors") {
    const std::string a = control_csv(1, 200), b = control_csv(2, 200);
    json cfg = {{"schema_version", 1}, {"seed", 4}, {"mcmc", small_mcmc()},
                {"datasets", {{{"name", "trial1"}, {"csv", a}}, {{"name", "trial2"}, {"csv", b}}}}};
    const json r = run_control_fit(cfg);
    CHECK(r["kind"] == "control_posterior");
    CHECK(r["sources"].size() == 2);
    CHECK(r["records"].get<std::size_t>() ==
          r["sources"][0]["records"].get<std::size_t>() + r["sources"][1]["records"].get<std::size_t>());
    CHECK(r["draws"].size() == 1000);
    CHECK(r["summary"]["mean"]["shape"].get<double>() == doctest::Approx(1.21).epsilon(0.15));
    CHECK(run_control_fit(cfg).dump() == r.dump());

    // Posterior file round trip into an engine config.
    TempDir dir;
    const fs::path post = dir.path / "post.json";
    std::ofstream(post) << r.dump();
    json c = single_config();
    c["control"] = {{"posterior_file", post.string()}};
    CHECK_NOTHROW(execute(c, RunKind::assurance, 1));

    json bad = {{"schema_version", 1}, {"datasets", {{{"name", "broken"}, {"csv", "time,event\n1.0,1\n2.0,x\n"}}}}};
    try {
        run_control_fit(bad);
        FAIL("accepted a malformed row");
    } catch (const CsvError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("broken:3") != std::string::npos);
    }
    json empty = {{"schema_version", 1}, {"datasets", {{{"csv", "time,event\n"}}}}};
    CHECK_THROWS_AS(run_control_fit(empty), CsvError);

    json unseeded = cfg;
    unseeded.erase("seed");
    const json u = run_control_fit(unseeded);
    CHECK(u["seed"].get<std::uint64_t>() != 0);
}

TEST_CASE("control fit: files, and a single CSV equals a pool of one") {
    TempDir dir;
    const fs::path f = dir.path / "one.csv";
    std::ofstream(f) << control_csv(3, 200);
    json files = {{"schema_version", 1}, {"seed", 8}, {"mcmc", small_mcmc()}, {"csv", {f.string()}}};
    json inline_cfg = {{"schema_version", 1}, {"seed", 8}, {"mcmc", small_mcmc()},
                       {"datasets", {{{"name", "x"}, {"csv", control_csv(3, 200)}}}}};
    const json a = run_control_fit(files), b = run_control_fit(inline_cfg);
    CHECK(a["draws"] == b["draws"]);
    CHECK(a["mle"] == b["mle"]);
}

TEST_CASE("job manager: runs, persists and reloads") {
    TempDir dir;
    ServiceOptions opts;
    opts.state_dir = dir.path.string();
    opts.max_jobs = 1;
    json record;
    {
        JobManager jobs(opts);
        const std::string id = jobs.submit(RunKind::curve, worked_config(), "persist-1");
        CHECK(id == "persist-1");
        CHECK_THROWS_AS(jobs.submit(RunKind::curve, worked_config(), "persist-1"), DuplicateJob);
        CHECK_THROWS_AS(jobs.submit(RunKind::curve, worked_config(), "bad/id"), ConfigError);
        for (int i = 0; i < 600 && (*jobs.status(id))["status"] != "done"; ++i)
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        REQUIRE((*jobs.status(id))["status"] == "done");
        record = *jobs.record(id);
        CHECK((*jobs.status(id))["iterations_done"] == 600);
    }
    CHECK(fs::exists(dir.path / "jobs" / "persist-1.json"));

    // A job interrupted mid-run is queued again on restart.
    json interrupted = {{"job_id", "resume-1"}, {"kind", "assurance"}, {"status", "running"},
                        {"config", single_config()}, {"seed_generated", false}};
    std::ofstream(dir.path / "jobs" / "resume-1.json") << interrupted.dump();

    JobManager reloaded(opts);
    REQUIRE(reloaded.status("persist-1"));
    CHECK((*reloaded.status("persist-1"))["status"] == "done");
    CHECK(reloaded.list().size() == 2);
    CHECK(reloaded.record("persist-1")->dump() == record.dump());
    CHECK(record["results"].dump() == execute(worked_config(), RunKind::curve, 1)["results"].dump());

    for (int i = 0; i < 600 && (*reloaded.status("resume-1"))["status"] != "done"; ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    REQUIRE((*reloaded.status("resume-1"))["status"] == "done");
    CHECK(reloaded.record("resume-1")->at("results").dump() ==
          execute(single_config(), RunKind::assurance, 1)["results"].dump());
}

TEST_CASE("http: endpoints") {
    TempDir dir;
    ServiceOptions opts;
    opts.state_dir = dir.path.string();
    Server server(opts);
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread t([&] { server.listen(); });
    httplib::Client cli("127.0.0.1", port);
    for (int i = 0; i < 100 && !cli.Get("/api/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));

    {
        auto r = cli.Get("/api/health");
        REQUIRE(r);
        CHECK(r->status == 200);
        const json j = json::parse(r->body);
        CHECK(j["status"] == "ok");
        CHECK(j["version"] == kToolVersion);
    }
    {
        auto r = cli.Post("/api/prior/fit", R"({"schema_version":1,"probabilities":[0.25,0.5,0.75],"quantiles":[0.55,0.6,0.7]})",
                          "application/json");
        REQUIRE(r);
        CHECK(r->status == 200);
        const json j = json::parse(r->body);
        CHECK(j["shape"].get<double>() == doctest::Approx(29.6).epsilon(0.01));
        CHECK(j["rate"].get<double>() == doctest::Approx(47.8).epsilon(0.01));
    }
    {
        auto r = cli.Post("/api/prior/fit", R"({"schema_version":1,"probabilities":[0.25,0.5,0.75]})",
                          "application/json");
        REQUIRE(r);
        CHECK(r->status == 400);
        CHECK(json::parse(r->body)["path"] == "$.quantiles");
    }
    {
        auto r = cli.Post("/api/prior/fit", "{not json", "application/json");
        REQUIRE(r);
        CHECK(r->status == 400);
    }
    {
        json body = {{"schema_version", 1}, {"seed", 2}, {"mcmc", small_mcmc()},
                     {"datasets", {{{"name", "hist"}, {"csv", control_csv(5, 150)}}}}};
        auto r = cli.Post("/api/control/fit", body.dump(), "application/json");
        REQUIRE(r);
        CHECK(r->status == 200);
        const json j = json::parse(r->body);
        CHECK(j["draws"].size() == 1000);
        CHECK(j.dump() == run_control_fit(body).dump());

        body["datasets"][0]["csv"] = "time,event\n-1,1\n";
        r = cli.Post("/api/control/fit", body.dump(), "application/json");
        REQUIRE(r);
        CHECK(r->status == 400);
    }
    {
        json bad = single_config();
        bad["effect"]["hazard_ratio"]["shape"] = -1;
        auto r = cli.Post("/api/assurance", bad.dump(), "application/json");
        REQUIRE(r);
        CHECK(r->status == 400);
        CHECK(json::parse(r->body)["path"] == "$.effect.hazard_ratio.shape");

        json csv = single_config();
        csv["control"] = {{"csv", {"/tmp/x.csv"}}};
        r = cli.Post("/api/assurance", csv.dump(), "application/json");
        REQUIRE(r);
        CHECK(r->status == 400);
    }
    {
        CHECK(cli.Get("/api/jobs/nope")->status == 404);
        CHECK(cli.Get("/api/jobs/nope/result")->status == 404);
    }
    {
        auto r = cli.Post("/api/assurance?id=parity", worked_config().dump(), "application/json");
        REQUIRE(r);
        CHECK(r->status == 202);
        CHECK(json::parse(r->body)["job_id"] == "parity");
        CHECK(cli.Post("/api/assurance?id=parity", worked_config().dump(), "application/json")->status == 409);

        json status;
        for (int i = 0; i < 600; ++i) {
            status = json::parse(cli.Get("/api/jobs/parity")->body);
            CHECK(status["iterations_done"].get<std::size_t>() <= status["iterations_total"].get<std::size_t>());
            if (status["status"] == "done") break;
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        REQUIRE(status["status"] == "done");
        CHECK(status["iterations_total"] == 600);
        auto res = cli.Get("/api/jobs/parity/result");
        REQUIRE(res);
        CHECK(res->status == 200);
        const json rec = json::parse(res->body);
        // Grid in an assurance config runs every point, same as the CLI.
        const json cli_rec = execute(worked_config(), RunKind::assurance, 1);
        CHECK(rec["results"].dump() == cli_rec["results"].dump());
        CHECK(rec["config_hash"] == cli_rec["config_hash"]);
        CHECK(rec["seed"] == 123);

        const json listed = json::parse(cli.Get("/api/jobs")->body)["jobs"];
        REQUIRE(listed.size() == 1);
        CHECK(listed[0]["job_id"] == "parity");
    }
    {
        json c = single_config();
        c.erase("seed");
        c["flexible"] = {{"curves", 100}};
        auto r = cli.Post("/api/assurance/flexible", c.dump(), "application/json");
        REQUIRE(r);
        CHECK(r->status == 202);
        const std::string id = json::parse(r->body)["job_id"];
        json rec;
        for (int i = 0; i < 600; ++i) {
            auto g = cli.Get(("/api/jobs/" + id + "/result").c_str());
            if (g->status == 200) {
                rec = json::parse(g->body);
                break;
            }
            CHECK(g->status == 202);
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        REQUIRE(rec.is_object());
        CHECK(rec["kind"] == "flexible");
        CHECK(rec["seed_generated"] == true);
        CHECK(rec["config"]["seed"] == rec["seed"]);
        json again = c;
        again["seed"] = rec["seed"];
        CHECK(execute(again, RunKind::flexible, 1)["results"].dump() == rec["results"].dump());
    }
    {
        auto r = cli.Options("/api/assurance");
        REQUIRE(r);
        CHECK(r->status == 204);
        CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
    }
    server.stop();
    t.join();
}
