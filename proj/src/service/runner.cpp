#include "dte/service/runner.hpp"

#include <chrono>
#include <ctime>
#include <mutex>
#include <sstream>

namespace dte::service {

namespace {

json weibull_json(const WeibullParams& p) { return {{"rate", p.rate()}, {"shape", p.shape()}}; }

json point_json(const DesignPoint& d, const AssuranceResult& r) {
    return {{"n_control", d.n_control},   {"n_experimental", d.n_experimental},
            {"events", d.events},         {"estimate", r.estimate},
            {"mc_se", r.mc_se},           {"iterations", r.iterations},
            {"successes", r.successes}};
}

json test_json(const TestSpec& t) {
    json j = {{"alpha", t.alpha}};
    if (t.kind == TestKind::log_rank) {
        j["kind"] = "log_rank";
    } else {
        j["kind"] = "fleming_harrington";
        j["rho"] = t.rho;
        j["gamma"] = t.gamma;
    }
    return j;
}

std::uint64_t resolve_seed(ObjectReader& r) {
    return r.has("seed") ? r.unsigned_integer("seed") : generate_seed();
}

}  // namespace

const char* kind_name(RunKind kind) {
    switch (kind) {
        case RunKind::assurance: return "assurance";
        case RunKind::curve: return "curve";
        case RunKind::flexible: return "flexible";
    }
    return "unknown";
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json run_prior_fit(const json& config) {
    ObjectReader r(config, "$");
    check_schema_version(r);
    auto p = r.numbers("probabilities");
    auto q = r.numbers("quantiles");
    r.finish();
    QuantileJudgements j = [&] {
        try {
            return QuantileJudgements(p, q);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("$", e.what());
        }
    }();
    const GammaFit fit = fit_gamma_to_quantiles(j);
    json feedback = json::array();
    for (std::size_t i = 0; i < p.size(); ++i)
        feedback.push_back({{"probability", p[i]}, {"elicited", q[i]}, {"fitted", fit.feedback[i]}});
    return {{"kind", "prior_fit"},
            {"distribution", "gamma"},
            {"shape", fit.dist.shape()},
            {"rate", fit.dist.rate()},
            {"mean", fit.dist.mean()},
            {"objective", fit.objective},
            {"converged", fit.converged},
            {"feedback", feedback}};
}

json control_fit_results(const std::vector<NamedDataset>& datasets, const McmcConfig& mcmc) {
    std::vector<SurvivalDataset> sets;
    json sources = json::array();
    for (const auto& d : datasets) {
        sets.push_back(d.data);
        sources.push_back({{"name", d.name}, {"records", d.data.size()}, {"events", d.data.events()}});
    }
    const SurvivalDataset pooled = pool(sets);
    const WeibullFit mle = weibull_mle(pooled);
    const PosteriorSample post = mcmc_weibull_posterior(pooled, mcmc);
    const auto mean = post.mean(), sd = post.sd();
    json draws = json::array();
    for (const auto& d : post.draws) draws.push_back({d.rate(), d.shape()});
    json warnings = json::array();
    if (post.low_ess)
        warnings.push_back("effective sample size below " + std::to_string(static_cast<int>(mcmc.ess_floor)));
    if (post.acceptance_out_of_range) warnings.push_back("acceptance rate outside [0.1, 0.6]");
    return {{"schema_version", kSchemaVersion},
            {"kind", "control_posterior"},
            {"seed", mcmc.seed},
            {"sources", sources},
            {"records", pooled.size()},
            {"events", pooled.events()},
            {"mle", {{"rate", mle.params.rate()}, {"shape", mle.params.shape()}, {"loglik", mle.loglik}}},
            {"summary", {{"mean", {{"rate", mean[0]}, {"shape", mean[1]}}}, {"sd", {{"rate", sd[0]}, {"shape", sd[1]}}}}},
            {"diagnostics",
             {{"acceptance_rate", post.acceptance_rate},
              {"ess", {{"rate", post.ess[0]}, {"shape", post.ess[1]}}},
              {"low_ess", post.low_ess},
              {"acceptance_out_of_range", post.acceptance_out_of_range}}},
            {"mcmc",
             {{"iterations", mcmc.iterations}, {"burn_in", mcmc.burn_in}, {"thin", mcmc.thin}}},
            {"warnings", warnings},
            {"draws", draws}};
}

json run_control_fit(const json& config) {
    ObjectReader r(config, "$");
    check_schema_version(r);
    const std::uint64_t seed = resolve_seed(r);
    const bool files = r.has("csv"), inline_data = r.has("datasets");
    if (files == inline_data) throw ConfigError("$", "exactly one of csv or datasets is required");
    McmcConfig mcmc = r.has("mcmc") ? parse_mcmc(r.object("mcmc")) : McmcConfig{};
    mcmc.seed = seed;

    std::vector<NamedDataset> sets;
    const std::string key = files ? "csv" : "datasets";
    const json& list = r.at(key);
    if (!list.is_array() || list.empty()) throw ConfigError(r.child(key), "expected a non-empty array");
    r.finish();
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string path = r.child(key) + "[" + std::to_string(i) + "]";
        if (files) {
            if (!list[i].is_string()) throw ConfigError(path, "expected a path");
            const std::string file = list[i].get<std::string>();
            sets.push_back({file, read_ipd_csv_file(file)});
        } else {
            ObjectReader d(list[i], path);
            const std::string name = d.string("name", "dataset" + std::to_string(i + 1));
            const std::string text = d.string("csv");
            d.finish();
            std::istringstream in(text);
            try {
                sets.push_back({name, read_ipd_csv(in, name)});
            } catch (const CsvError& e) {
                throw CsvError(name, e.line(), e.detail());
            }
        }
    }
    return control_fit_results(sets, mcmc);
}

json run_engine(const RunConfig& cfg, RunKind kind, unsigned threads, const ProgressFn& progress) {
    const std::vector<DesignPoint> points =
        cfg.grid.empty() ? std::vector<DesignPoint>{{cfg.engine.design.n_control, cfg.engine.design.n_experimental,
                                                     cfg.engine.design.events}}
                         : cfg.grid;
    const std::size_t total = points.size() * cfg.engine.iterations;

    json results = {{"kind", kind_name(kind)},
                    {"seed", cfg.seed},
                    {"iterations", cfg.engine.iterations},
                    {"common_random_numbers", cfg.common_random_numbers},
                    {"test", test_json(cfg.engine.test)}};

    std::optional<CurveBank> bank;
    if (kind == RunKind::flexible) {
        const FlexConfig& flex = *cfg.flex;
        const double max_length = flex.max_length.value_or(
            default_max_length(cfg.engine.control, cfg.engine.effect, cfg.engine.design.recruitment, cfg.seed));
        bank.emplace(build_curve_bank(cfg.engine.control, cfg.engine.effect, flex, max_length, cfg.seed));
        results["flexible"] = {{"curves", flex.curves},
                               {"max_length", max_length},
                               {"step", flex.step},
                               {"early_fraction", flex.early_fraction},
                               {"late_fraction", flex.late_fraction},
                               {"control_floor", flex.control_floor}};
    }

    json out = json::array();
    for (std::size_t i = 0; i < points.size(); ++i) {
        AssuranceConfig point = cfg.engine;
        point.design = TrialDesign(points[i].n_control, points[i].n_experimental, points[i].events,
                                   cfg.engine.design.recruitment);
        RunOptions opts;
        opts.threads = std::max(1u, threads);
        opts.sub_stream = cfg.common_random_numbers ? 0 : i;
        if (progress) {
            const std::size_t offset = i * cfg.engine.iterations;
            opts.progress = [&, offset](std::size_t done, std::size_t successes) {
                progress(offset + done, total, done ? static_cast<double>(successes) / done : 0.0);
            };
        }
        const AssuranceResult r = kind == RunKind::flexible ? flexible_assurance(point, *bank, *cfg.flex, opts)
                                                            : assurance(point, opts);
        out.push_back(point_json(points[i], r));
    }
    results["points"] = out;
    return results;
}

json make_record(const std::string& kind, const json& config, std::uint64_t seed, bool seed_generated,
                 const std::string& started_at, const std::string& finished_at, const json& results) {
    return {{"schema_version", kSchemaVersion},
            {"tool_version", kToolVersion},
            {"kind", kind},
            {"config_hash", config_hash(config)},
            {"seed", seed},
            {"seed_generated", seed_generated},
            {"started_at", started_at},
            {"finished_at", finished_at},
            {"config", config},
            {"results", results}};
}

json execute(const json& config, RunKind kind, unsigned threads, const ProgressFn& progress) {
    const RunConfig cfg = parse_run_config(config, kind);
    const std::string started = utc_timestamp();
    const json results = run_engine(cfg, kind, threads, progress);
    return make_record(kind_name(kind), cfg.raw, cfg.seed, cfg.seed_generated, started, utc_timestamp(), results);
}

std::string curve_csv(const json& results) {
    std::ostringstream out;
    out << "n_c,n_e,E,estimate,mc_se,N\n";
    for (const auto& p : results.at("points")) {
        out << p.at("n_control").get<std::size_t>() << ',' << p.at("n_experimental").get<std::size_t>() << ','
            << p.at("events").get<std::size_t>() << ',' << json(p.at("estimate").get<double>()).dump() << ','
            << json(p.at("mc_se").get<double>()).dump() << ',' << p.at("iterations").get<std::size_t>() << '\n';
    }
    return out.str();
}

json run_fit_dte(const SurvivalDataset& data, const DteFitRequest& req, unsigned threads) {
    auto fit_json = [&](const DTEFit& f) {
        return json{{"method", f.method == FitMethod::A ? "A" : "B"},
                    {"delay", f.delay},
                    {"control", weibull_json(f.control)},
                    {"experimental", weibull_json(f.experimental)},
                    {"goodness", f.goodness},
                    {"converged", f.converged}};
    };
    json results = {{"kind", "fit_dte"}, {"delay", req.delay}};
    if (req.compare_grid.empty()) {
        const DTEFit f = req.method == FitMethod::A ? fit_method_a(data, req.delay)
                                                    : fit_method_b(data, req.delay, req.estimator);
        results["fit"] = fit_json(f);
        return results;
    }
    const DTEFit a = fit_method_a(data, req.delay);
    const DTEFit b = fit_method_b(data, req.delay, req.estimator);
    RunOptions opts;
    opts.threads = std::max(1u, threads);
    const auto cmp = compare_power(a, b, req.compare_grid, RecruitmentModel::uniform(12.0), req.test,
                                   req.iterations, req.seed, opts);
    json rows = json::array();
    for (const auto& c : cmp)
        rows.push_back({{"n_control", c.design.n_control},
                        {"n_experimental", c.design.n_experimental},
                        {"events", c.design.events},
                        {"power_a", c.method_a.estimate},
                        {"mc_se_a", c.method_a.mc_se},
                        {"power_b", c.method_b.estimate},
                        {"mc_se_b", c.method_b.mc_se}});
    results["fits"] = {fit_json(a), fit_json(b)};
    results["seed"] = req.seed;
    results["test"] = test_json(req.test);
    results["comparison"] = rows;
    return results;
}

}  // namespace dte::service
