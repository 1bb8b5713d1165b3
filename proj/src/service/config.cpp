#include "dte/service/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace dte::service {

namespace {

std::string type_name(const json& j) { return j.type_name(); }

// Domain constructors throw invalid_argument; report those against `path`.
template <class F>
auto at_path(const std::string& path, F f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

std::uint64_t as_unsigned(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < 0) throw ConfigError(path, "expected a non-negative integer");
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d >= 0.0 && d < 9.007199254740992e15 && std::floor(d) == d) return static_cast<std::uint64_t>(d);
    }
    throw ConfigError(path, "expected a non-negative integer, got " + v.dump());
}

void require_file(const std::string& file, const std::string& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(file, ec)) throw ConfigError(path, "file not found: " + file);
}

}  // namespace

ObjectReader::ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object, got " + type_name(j_));
}

bool ObjectReader::has(const std::string& key) const { return j_.contains(key); }

const json& ObjectReader::at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(child(key), "required field missing");
    return j_.at(key);
}

double ObjectReader::number(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(child(key), "expected a number, got " + type_name(v));
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(child(key), "must be finite");
    return d;
}

double ObjectReader::number(const std::string& key, double fallback) {
    seen_.insert(key);
    return has(key) ? number(key) : fallback;
}

double ObjectReader::positive(const std::string& key) {
    const double d = number(key);
    if (!(d > 0.0)) throw ConfigError(child(key), "must be > 0");
    return d;
}

double ObjectReader::probability(const std::string& key) {
    const double d = number(key);
    if (!(d >= 0.0 && d <= 1.0)) throw ConfigError(child(key), "must lie in [0, 1]");
    return d;
}

std::uint64_t ObjectReader::count(const std::string& key) {
    const std::uint64_t n = unsigned_integer(key);
    if (n < 1) throw ConfigError(child(key), "must be >= 1");
    return n;
}

std::uint64_t ObjectReader::count(const std::string& key, std::uint64_t fallback) {
    seen_.insert(key);
    return has(key) ? count(key) : fallback;
}

std::uint64_t ObjectReader::unsigned_integer(const std::string& key) { return as_unsigned(at(key), child(key)); }

bool ObjectReader::boolean(const std::string& key, bool fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(child(key), "expected a boolean, got " + type_name(v));
    return v.get<bool>();
}

std::string ObjectReader::string(const std::string& key) {
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError(child(key), "expected a string, got " + type_name(v));
    return v.get<std::string>();
}

std::string ObjectReader::string(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    return has(key) ? string(key) : fallback;
}

std::vector<double> ObjectReader::numbers(const std::string& key) {
    const json& v = at(key);
    if (!v.is_array()) throw ConfigError(child(key), "expected an array, got " + type_name(v));
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number())
            throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

ObjectReader ObjectReader::object(const std::string& key) { return ObjectReader(at(key), child(key)); }

void ObjectReader::finish() const {
    for (const auto& [k, v] : j_.items())
        if (!seen_.count(k)) throw ConfigError(child(k), "unknown field");
}

void check_schema_version(ObjectReader& r) {
    const std::uint64_t v = r.unsigned_integer("schema_version");
    if (v != static_cast<std::uint64_t>(kSchemaVersion))
        throw ConfigError(r.child("schema_version"),
                          "unsupported version " + std::to_string(v) + " (expected " +
                              std::to_string(kSchemaVersion) + ")");
}

QuantileJudgements parse_judgements(ObjectReader r) {
    auto p = r.numbers("probabilities");
    auto q = r.numbers("quantiles");
    r.finish();
    return at_path(r.path(), [&] { return QuantileJudgements(std::move(p), std::move(q)); });
}

GammaDist parse_gamma_prior(ObjectReader r) {
    if (r.has("judgements")) {
        const auto j = parse_judgements(r.object("judgements"));
        r.finish();
        return fit_gamma_to_quantiles(j).dist;
    }
    const double shape = r.positive("shape");
    const double rate = r.positive("rate");
    r.finish();
    return GammaDist(shape, rate);
}

EffectPrior parse_effect(ObjectReader r) {
    const double ps = r.probability("p_separation");
    const double pd = r.probability("p_delay");
    const GammaDist delay = parse_gamma_prior(r.object("delay"));
    const GammaDist hr = parse_gamma_prior(r.object("hazard_ratio"));
    r.finish();
    return EffectPrior(ps, pd, delay, hr);
}

RecruitmentModel parse_recruitment(ObjectReader r) {
    const std::string type = r.string("type");
    RecruitmentModel::Variant v;
    if (type == "uniform") {
        v = UniformRecruitment{r.positive("duration")};
    } else if (type == "piecewise") {
        v = PiecewiseRecruitment{r.numbers("breakpoints"), r.numbers("rates")};
    } else if (type == "power") {
        const double period = r.positive("period");
        v = PowerRecruitment{period, r.positive("exponent")};
    } else {
        throw ConfigError(r.child("type"), "expected uniform, piecewise or power, got '" + type + "'");
    }
    r.finish();
    return at_path(r.path(), [&] { return RecruitmentModel(v); });
}

DesignPoint parse_design_point(ObjectReader r) {
    const auto nc = r.count("n_control");
    const auto ne = r.count("n_experimental");
    const auto e = r.count("events");
    r.finish();
    if (e > nc + ne) throw ConfigError(r.child("events"), "must not exceed n_control + n_experimental");
    return {nc, ne, e};
}

std::vector<DesignPoint> parse_grid(const json& j, const std::string& path) {
    std::vector<DesignPoint> grid;
    if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i)
            grid.push_back(parse_design_point(ObjectReader(j[i], path + "[" + std::to_string(i) + "]")));
    } else {
        ObjectReader r(j, path);
        const json& n = r.at("n_per_arm");
        if (!n.is_array()) throw ConfigError(r.child("n_per_arm"), "expected an array");
        std::vector<std::size_t> sizes;
        for (std::size_t i = 0; i < n.size(); ++i) {
            const std::string p = r.child("n_per_arm") + "[" + std::to_string(i) + "]";
            const auto v = as_unsigned(n[i], p);
            if (v < 1) throw ConfigError(p, "must be >= 1");
            sizes.push_back(v);
        }
        const double frac = r.number("event_fraction");
        r.finish();
        grid = at_path(r.path(), [&] { return balanced_grid(sizes, frac); });
    }
    if (grid.empty()) throw ConfigError(path, "grid must be non-empty");
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (grid[i].events < 1) throw ConfigError(path + "[" + std::to_string(i) + "]", "events must be >= 1");
    return grid;
}

TestSpec parse_test(ObjectReader r) {
    const std::string kind = r.string("kind");
    const double alpha = r.number("alpha", 0.025);
    TestSpec spec;
    if (kind == "log_rank") {
        spec = at_path(r.child("alpha"), [&] { return TestSpec::log_rank(alpha); });
    } else if (kind == "fleming_harrington") {
        const double rho = r.number("rho");
        const double gamma = r.number("gamma");
        spec = at_path(r.path(), [&] { return TestSpec::fleming_harrington(rho, gamma, alpha); });
    } else {
        throw ConfigError(r.child("kind"), "expected log_rank or fleming_harrington, got '" + kind + "'");
    }
    r.finish();
    return spec;
}

McmcConfig parse_mcmc(ObjectReader r) {
    McmcConfig c;
    c.iterations = static_cast<int>(r.count("iterations", c.iterations));
    c.burn_in = static_cast<int>(r.has("burn_in") ? r.unsigned_integer("burn_in") : c.burn_in);
    c.thin = static_cast<int>(r.count("thin", c.thin));
    c.pilot_rounds = static_cast<int>(r.has("pilot_rounds") ? r.unsigned_integer("pilot_rounds") : c.pilot_rounds);
    c.pilot_length = static_cast<int>(r.count("pilot_length", c.pilot_length));
    c.target_acceptance = r.number("target_acceptance", c.target_acceptance);
    c.ess_floor = r.number("ess_floor", c.ess_floor);
    if (r.has("proposal_scale")) {
        const auto s = r.numbers("proposal_scale");
        if (s.size() != 2 || !(s[0] > 0) || !(s[1] > 0))
            throw ConfigError(r.child("proposal_scale"), "expected two positive scales");
        c.proposal_scale = std::array<double, 2>{s[0], s[1]};
    }
    if (c.burn_in >= c.iterations) throw ConfigError(r.child("burn_in"), "must be less than iterations");
    if (!(c.target_acceptance > 0 && c.target_acceptance < 1))
        throw ConfigError(r.child("target_acceptance"), "must lie in (0, 1)");
    r.finish();
    return c;
}

FlexConfig parse_flex(ObjectReader r) {
    FlexConfig f;
    f.curves = r.count("curves", f.curves);
    if (r.has("max_length")) f.max_length = r.positive("max_length");
    f.step = r.number("step", f.step);
    f.early_fraction = r.number("early_fraction", f.early_fraction);
    f.late_fraction = r.number("late_fraction", f.late_fraction);
    f.control_floor = r.number("control_floor", f.control_floor);
    f.max_attempts = static_cast<int>(r.count("max_attempts", static_cast<std::uint64_t>(f.max_attempts)));
    r.finish();
    at_path(r.path(), [&] {
        f.validate();
        return 0;
    });
    return f;
}

std::vector<WeibullParams> read_posterior_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("kind", "") != "control_posterior")
        throw ConfigError(path, "not a control posterior file");
    if (!j.contains("draws") || !j["draws"].is_array() || j["draws"].empty())
        throw ConfigError(path + ":$.draws", "expected a non-empty array");
    std::vector<WeibullParams> draws;
    for (std::size_t i = 0; i < j["draws"].size(); ++i) {
        const auto& d = j["draws"][i];
        const std::string p = path + ":$.draws[" + std::to_string(i) + "]";
        if (!d.is_array() || d.size() != 2 || !d[0].is_number() || !d[1].is_number())
            throw ConfigError(p, "expected [rate, shape]");
        draws.push_back(at_path(p, [&] { return WeibullParams(d[0].get<double>(), d[1].get<double>()); }));
    }
    return draws;
}

ControlPriorSource parse_control(ObjectReader r, std::uint64_t seed) {
    int forms = r.has("fixed") + r.has("posterior_file") + r.has("draws") + r.has("csv");
    if (forms != 1)
        throw ConfigError(r.path(), "exactly one of fixed, posterior_file, draws or csv is required");
    if (r.has("fixed")) {
        ObjectReader f = r.object("fixed");
        const double rate = f.positive("rate");
        const double shape = f.positive("shape");
        f.finish();
        r.finish();
        return ControlPriorSource::fixed(WeibullParams(rate, shape));
    }
    if (r.has("posterior_file")) {
        const std::string file = r.string("posterior_file");
        require_file(file, r.child("posterior_file"));
        r.finish();
        return ControlPriorSource::sampled(read_posterior_file(file));
    }
    if (r.has("draws")) {
        const json& d = r.at("draws");
        if (!d.is_array() || d.empty()) throw ConfigError(r.child("draws"), "expected a non-empty array");
        std::vector<WeibullParams> draws;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const std::string p = r.child("draws") + "[" + std::to_string(i) + "]";
            if (!d[i].is_array() || d[i].size() != 2 || !d[i][0].is_number() || !d[i][1].is_number())
                throw ConfigError(p, "expected [rate, shape]");
            draws.push_back(at_path(p, [&] { return WeibullParams(d[i][0].get<double>(), d[i][1].get<double>()); }));
        }
        r.finish();
        return ControlPriorSource::sampled(std::move(draws));
    }
    const json& files = r.at("csv");
    if (!files.is_array() || files.empty()) throw ConfigError(r.child("csv"), "expected a non-empty array of paths");
    std::vector<std::string> paths;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const std::string p = r.child("csv") + "[" + std::to_string(i) + "]";
        if (!files[i].is_string()) throw ConfigError(p, "expected a path");
        require_file(files[i].get<std::string>(), p);
        paths.push_back(files[i].get<std::string>());
    }
    McmcConfig mcmc = r.has("mcmc") ? parse_mcmc(r.object("mcmc")) : McmcConfig{};
    mcmc.seed = seed;
    r.finish();
    std::vector<SurvivalDataset> sets;
    for (const auto& p : paths) sets.push_back(read_ipd_csv_file(p));
    return ControlPriorSource::sampled(mcmc_weibull_posterior(pool(sets), mcmc).draws);
}

std::uint64_t generate_seed() {
    std::random_device rd;
    const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    return s & ((std::uint64_t{1} << 53) - 1);   // exact in a JSON double
}

std::string config_hash(const json& config) {
    json c = config;
    if (c.is_object()) c.erase("seed");
    const std::string canonical = c.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << h;
    return "fnv1a64:" + out.str();
}

RunConfig parse_run_config(const json& j, RunKind kind) {
    ObjectReader r(j, "$");
    check_schema_version(r);

    bool generated = false;
    std::uint64_t seed = 0;
    if (r.has("seed")) {
        seed = r.unsigned_integer("seed");
    } else {
        seed = generate_seed();
        generated = true;
    }
    const std::uint64_t iterations = r.count("iterations");
    const RecruitmentModel rec =
        r.has("recruitment") ? parse_recruitment(r.object("recruitment")) : RecruitmentModel::uniform(12.0);

    std::vector<DesignPoint> grid;
    if (r.has("grid")) {
        grid = parse_grid(r.at("grid"), r.child("grid"));
    } else if (kind == RunKind::curve) {
        throw ConfigError(r.child("grid"), "required field missing");
    }
    std::optional<DesignPoint> point;
    if (r.has("design") || grid.empty()) point = parse_design_point(r.object("design"));
    const DesignPoint first = point ? *point : grid.front();
    const TrialDesign design = at_path(r.child("design"), [&] {
        return TrialDesign(first.n_control, first.n_experimental, first.events, rec);
    });

    const bool crn = r.boolean("common_random_numbers", true);
    const EffectPrior effect = parse_effect(r.object("effect"));
    const TestSpec test = r.has("test") ? parse_test(r.object("test")) : TestSpec::log_rank();
    std::optional<FlexConfig> flex;
    if (kind == RunKind::flexible) {
        flex = r.has("flexible") ? parse_flex(r.object("flexible")) : FlexConfig{};
    } else if (r.has("flexible")) {
        throw ConfigError(r.child("flexible"), "only valid for flexible runs");
    }
    ObjectReader control_reader = r.object("control");
    r.finish();
    // Last: the CSV form runs the sampler.
    ControlPriorSource control = parse_control(control_reader, seed);

    json raw = j;
    raw["seed"] = seed;
    return RunConfig{std::move(raw),
                     seed,
                     generated,
                     AssuranceConfig{design, std::move(control), effect, test, iterations, seed},
                     std::move(grid),
                     crn,
                     flex};
}

}  // namespace dte::service
