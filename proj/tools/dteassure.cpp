// dteassure: command-line front end for the assurance engine.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dte/service/server.hpp"

using namespace dte;
using namespace dte::service;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_record(const std::string& out, const json& record) {
    if (ends_with(out, ".csv")) {
        write_output(out, curve_csv(record.at("results")));
    } else {
        write_output(out, record.dump(2) + "\n");
    }
}

void print_points(const json& record) {
    for (const auto& p : record["results"]["points"])
        std::cerr << "n_c=" << p["n_control"] << " n_e=" << p["n_experimental"] << " E=" << p["events"]
                  << "  estimate " << p["estimate"].get<double>() << " (MC-SE " << p["mc_se"].get<double>() << ")\n";
    std::cerr << "seed " << record["seed"] << (record["seed_generated"].get<bool>() ? " (generated)" : "") << "\n";
}

Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Assurance and power for time-to-event trials with a delayed treatment effect"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    std::string config_path, out_path;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config_path, "JSON config file");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_path, "output file (.csv for a curve table, otherwise JSON); default stdout");
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    };

    auto* fit_prior = app.add_subcommand("fit-prior", "fit a Gamma prior to elicited quantiles");
    common(fit_prior, true);

    auto* fit_control = app.add_subcommand("fit-control", "pooled Weibull posterior for the control arm");
    common(fit_control, false);
    std::vector<std::string> csv_files;
    int mcmc_iterations = 20000, mcmc_burn = 5000, mcmc_thin = 4;
    fit_control->add_option("--csv", csv_files, "IPD CSV files to pool")->check(CLI::ExistingFile);
    fit_control->add_option("--iterations", mcmc_iterations, "MCMC iterations")->check(CLI::PositiveNumber);
    fit_control->add_option("--burn-in", mcmc_burn, "MCMC burn-in")->check(CLI::NonNegativeNumber);
    fit_control->add_option("--thin", mcmc_thin, "MCMC thinning")->check(CLI::PositiveNumber);

    auto* assurance_cmd = app.add_subcommand("assurance", "assurance at one design (or a grid, if given)");
    common(assurance_cmd, true);
    auto* curve_cmd = app.add_subcommand("curve", "assurance over a design grid");
    common(curve_cmd, true);
    auto* flexible_cmd = app.add_subcommand("flexible", "assurance with flexible experimental curves");
    common(flexible_cmd, true);

    auto* fit_dte = app.add_subcommand("fit-dte", "fit the delayed-effect model to two-arm data");
    common(fit_dte, false);
    std::string dte_csv, method = "A", b_estimator = "ls", test_kind = "log_rank";
    double delay = 0.0, rho = 0.0, gamma = 1.0, event_fraction = 0.8, alpha = 0.025;
    std::vector<std::size_t> compare_n;
    std::size_t compare_iterations = 1000;
    fit_dte->add_option("--csv", dte_csv, "IPD CSV with an arm column")->required()->check(CLI::ExistingFile);
    fit_dte->add_option("--delay", delay, "delay T in months")->required()->check(CLI::NonNegativeNumber);
    fit_dte->add_option("--method", method, "A (shared shape) or B (free shape)")
        ->check(CLI::IsMember({"A", "B"}));
    fit_dte->add_option("--b-estimator", b_estimator, "Method B estimator: ls or mle")
        ->check(CLI::IsMember({"ls", "mle"}));
    fit_dte->add_option("--compare-n", compare_n, "n per arm grid for a paired A/B power comparison");
    fit_dte->add_option("--event-fraction", event_fraction, "events as a fraction of 2n");
    fit_dte->add_option("--iterations", compare_iterations, "power iterations per grid point");
    fit_dte->add_option("--test", test_kind, "log_rank or fleming_harrington")
        ->check(CLI::IsMember({"log_rank", "fleming_harrington"}));
    fit_dte->add_option("--rho", rho, "FH rho");
    fit_dte->add_option("--gamma", gamma, "FH gamma");
    fit_dte->add_option("--alpha", alpha, "one-sided alpha");

    auto* simulate = app.add_subcommand("simulate", "simulate one event-driven two-arm trial as IPD CSV");
    double sim_rate = 0.074, sim_shape = 1.21, sim_delay = 0.0, sim_hr = 1.0, sim_duration = 12.0;
    std::size_t sim_n = 200, sim_events = 0;
    bool sim_control_only = false;
    simulate->add_option("--control-rate", sim_rate, "control Weibull rate")->check(CLI::PositiveNumber);
    simulate->add_option("--control-shape", sim_shape, "control Weibull shape")->check(CLI::PositiveNumber);
    simulate->add_option("--delay", sim_delay, "delay T in months")->check(CLI::NonNegativeNumber);
    simulate->add_option("--hr", sim_hr, "post-delay hazard ratio")->check(CLI::PositiveNumber);
    simulate->add_option("--n", sim_n, "subjects per arm")->check(CLI::PositiveNumber);
    simulate->add_option("--events", sim_events, "events at analysis (default 80% of 2n)");
    simulate->add_option("--recruitment", sim_duration, "uniform recruitment period in months")
        ->check(CLI::PositiveNumber);
    simulate->add_flag("--control-only", sim_control_only, "write only the control arm, without an arm column");
    simulate->add_option("--out", out_path, "output CSV; default stdout");
    simulate->add_option("--seed", seed, "seed");

    auto* serve = app.add_subcommand("serve", "run the JSON HTTP service");
    int port = 8080;
    std::string host = "127.0.0.1", state_dir = "dteassure-state";
    unsigned max_jobs = 2;
    serve->add_option("--port", port, "port (0 picks a free one)");
    serve->add_option("--host", host, "bind address");
    serve->add_option("--state-dir", state_dir, "job state directory");
    serve->add_option("--max-jobs", max_jobs, "jobs executing at once")->check(CLI::PositiveNumber);
    serve->add_option("--threads", threads, "worker threads per job")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*fit_prior) {
            const json result = run_prior_fit(read_json_file(config_path));
            std::cerr << "Gamma(" << result["shape"].get<double>() << ", " << result["rate"].get<double>() << ")\n";
            for (const auto& f : result["feedback"])
                std::cerr << "  P=" << f["probability"].get<double>() << "  elicited " << f["elicited"].get<double>()
                          << "  fitted " << f["fitted"].get<double>() << "\n";
            write_output(out_path, result.dump(2) + "\n");
        } else if (*fit_control) {
            json cfg;
            if (!config_path.empty()) {
                if (!csv_files.empty()) throw UsageError("give either --config or --csv, not both");
                cfg = read_json_file(config_path);
            } else {
                if (csv_files.empty()) throw UsageError("fit-control needs --csv files or --config");
                cfg = {{"schema_version", kSchemaVersion},
                       {"csv", csv_files},
                       {"mcmc", {{"iterations", mcmc_iterations}, {"burn_in", mcmc_burn}, {"thin", mcmc_thin}}}};
            }
            if (seed) cfg["seed"] = *seed;
            const json result = run_control_fit(cfg);
            std::cerr << "posterior mean rate " << result["summary"]["mean"]["rate"].get<double>() << ", shape "
                      << result["summary"]["mean"]["shape"].get<double>() << "; acceptance "
                      << result["diagnostics"]["acceptance_rate"].get<double>() << "; seed " << result["seed"]
                      << "\n";
            for (const auto& w : result["warnings"]) std::cerr << "warning: " << w.get<std::string>() << "\n";
            write_output(out_path, result.dump(2) + "\n");
        } else if (*assurance_cmd || *curve_cmd || *flexible_cmd) {
            const RunKind kind = *curve_cmd ? RunKind::curve : *flexible_cmd ? RunKind::flexible : RunKind::assurance;
            json cfg = read_json_file(config_path);
            if (seed) cfg["seed"] = *seed;
            const json record = execute(cfg, kind, threads);
            print_points(record);
            write_record(out_path, record);
        } else if (*fit_dte) {
            DteFitRequest req;
            req.delay = delay;
            req.method = method == "A" ? FitMethod::A : FitMethod::B;
            req.estimator =
                b_estimator == "mle" ? FreeShapeEstimator::maximum_likelihood : FreeShapeEstimator::least_squares;
            if (!compare_n.empty()) {
                req.compare_grid = balanced_grid(compare_n, event_fraction);
                req.test = test_kind == "log_rank" ? TestSpec::log_rank(alpha)
                                                   : TestSpec::fleming_harrington(rho, gamma, alpha);
                req.iterations = compare_iterations;
                req.seed = seed.value_or(generate_seed());
            }
            const json result = run_fit_dte(read_ipd_csv_file(dte_csv), req, threads);
            write_output(out_path, result.dump(2) + "\n");
        } else if (*simulate) {
            const std::size_t events = sim_events ? sim_events : static_cast<std::size_t>(1.6 * sim_n);
            const TrialDesign design(sim_n, sim_n, events, RecruitmentModel::uniform(sim_duration));
            const auto model = DTEModel::from_hazard_ratio(WeibullParams(sim_rate, sim_shape), sim_delay, sim_hr);
            const std::uint64_t s = seed.value_or(generate_seed());
            RandomStream rng(s);
            SurvivalDataset data = simulate_trial(design, model, rng).to_survival_dataset();
            if (sim_control_only) {
                std::vector<SurvivalRecord> recs = data.arm(Arm::control).records();
                for (auto& r : recs) r.arm.reset();
                data = SurvivalDataset(std::move(recs));
            }
            std::ostringstream csv;
            write_ipd_csv(csv, data);
            write_output(out_path, csv.str());
            std::cerr << "seed " << s << "\n";
        } else if (*serve) {
            ServiceOptions opts;
            opts.state_dir = state_dir;
            opts.max_jobs = max_jobs;
            opts.threads_per_job = threads;
            Server server(opts);
            const int bound = server.bind(host, port);
            if (bound < 0) throw std::runtime_error("cannot bind " + host);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on http://" << host << ":" << bound << "\n";
            server.listen();
            g_server = nullptr;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CsvError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
