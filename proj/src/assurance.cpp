#include "dte/assurance.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace dte {

namespace {

// Sub-stream tags for the auxiliary random streams of the flexible method.
constexpr std::uint64_t kCurveBankStream = 0xC0FFEE01ULL;
constexpr std::uint64_t kMaxLengthStream = 0xC0FFEE02ULL;

}  // namespace

ControlPriorSource ControlPriorSource::fixed(const WeibullParams& p) {
    return {std::make_shared<const std::vector<WeibullParams>>(1, p), true};
}

ControlPriorSource ControlPriorSource::sampled(std::vector<WeibullParams> draws) {
    if (draws.empty()) throw std::invalid_argument("posterior sample must be non-empty");
    return {std::make_shared<const std::vector<WeibullParams>>(std::move(draws)), false};
}

WeibullParams ControlPriorSource::draw(RandomStream& rng) const {
    if (fixed_) return draws_->front();
    return (*draws_)[rng.index(draws_->size())];
}

AssuranceResult AssuranceResult::from_tally(std::size_t successes, std::size_t iterations) {
    AssuranceResult r;
    r.iterations = iterations;
    r.successes = successes;
    r.estimate = static_cast<double>(successes) / static_cast<double>(iterations);
    r.mc_se = std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(iterations));
    return r;
}

AssuranceResult run_monte_carlo(std::size_t n, std::uint64_t seed, const RunOptions& opts,
                                const std::function<bool(RandomStream&)>& trial) {
    if (n < 1) throw std::invalid_argument("need at least one iteration");
    constexpr std::size_t kChunk = 64;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> successes{0};
    std::size_t done = 0;
    std::mutex progress_mutex;
    std::exception_ptr failure;

    auto worker = [&]() {
        try {
            for (;;) {
                const std::size_t begin = next.fetch_add(kChunk);
                if (begin >= n) break;
                const std::size_t end = std::min(n, begin + kChunk);
                std::size_t local = 0;
                for (std::size_t i = begin; i < end; ++i) {
                    auto rng = RandomStream::for_iteration(seed, opts.sub_stream, i);
                    local += trial(rng) ? 1 : 0;
                }
                const std::size_t total = successes.fetch_add(local) + local;
                if (opts.progress) {
                    std::lock_guard lock(progress_mutex);
                    done += end - begin;
                    opts.progress(done, total);
                }
            }
        } catch (...) {
            std::lock_guard lock(progress_mutex);
            if (!failure) failure = std::current_exception();
            next.store(n);
        }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>((n + kChunk - 1) / kChunk)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return AssuranceResult::from_tally(successes.load(), n);
}

DTEModel draw_standard_model(const ControlPriorSource& control, const EffectPrior& effect,
                             RandomStream& rng) {
    const WeibullParams c = control.draw(rng);
    const Scenario s = sample_scenario(effect, rng);
    return DTEModel::from_hazard_ratio(c, s.delay, s.hr_star);
}

AssuranceResult assurance(const AssuranceConfig& cfg, const RunOptions& opts) {
    return run_monte_carlo(cfg.iterations, cfg.seed, opts, [&](RandomStream& rng) {
        const DTEModel model = draw_standard_model(cfg.control, cfg.effect, rng);
        const TrialDataset data = simulate_trial(cfg.design, model, rng);
        return is_success(run_test(data, cfg.test), cfg.test);
    });
}

AssuranceResult power(const TrialDesign& design, const DTEModel& model, const TestSpec& test,
                      std::size_t iterations, std::uint64_t seed, const RunOptions& opts) {
    return run_monte_carlo(iterations, seed, opts, [&](RandomStream& rng) {
        const TrialDataset data = simulate_trial(design, model, rng);
        return is_success(run_test(data, test), test);
    });
}

AssuranceResult power(const TrialDesign& design, const FixedEffect& effect, const TestSpec& test,
                      std::size_t iterations, std::uint64_t seed, const RunOptions& opts) {
    return power(design, DTEModel::from_hazard_ratio(effect.control, effect.delay, effect.hazard_ratio),
                 test, iterations, seed, opts);
}

std::vector<DesignPoint> balanced_grid(const std::vector<std::size_t>& n_per_arm,
                                       double event_fraction) {
    if (!(event_fraction > 0.0 && event_fraction <= 1.0))
        throw std::invalid_argument("event fraction must lie in (0, 1]");
    std::vector<DesignPoint> grid;
    for (std::size_t n : n_per_arm) {
        const auto e = static_cast<std::size_t>(std::llround(event_fraction * 2.0 * static_cast<double>(n)));
        grid.push_back({n, n, std::max<std::size_t>(e, 1)});
    }
    return grid;
}

namespace {

RunOptions point_options(const RunOptions& opts, std::size_t index, bool crn) {
    RunOptions o = opts;
    o.sub_stream = crn ? opts.sub_stream : opts.sub_stream + index;
    return o;
}

}  // namespace

std::vector<CurvePoint> assurance_curve(const AssuranceConfig& cfg,
                                        const std::vector<DesignPoint>& grid,
                                        bool common_random_numbers, const RunOptions& opts) {
    if (grid.empty()) throw std::invalid_argument("design grid must be non-empty");
    std::vector<CurvePoint> out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        AssuranceConfig point = cfg;
        point.design = TrialDesign(grid[i].n_control, grid[i].n_experimental, grid[i].events,
                                   cfg.design.recruitment);
        out.push_back({grid[i], assurance(point, point_options(opts, i, common_random_numbers))});
    }
    return out;
}

std::vector<CurvePoint> power_curve(const DTEModel& model, const RecruitmentModel& recruitment,
                                    const std::vector<DesignPoint>& grid, const TestSpec& test,
                                    std::size_t iterations, std::uint64_t seed,
                                    bool common_random_numbers, const RunOptions& opts) {
    if (grid.empty()) throw std::invalid_argument("design grid must be non-empty");
    std::vector<CurvePoint> out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const TrialDesign design(grid[i].n_control, grid[i].n_experimental, grid[i].events,
                                 recruitment);
        out.push_back({grid[i], power(design, model, test, iterations, seed,
                                      point_options(opts, i, common_random_numbers))});
    }
    return out;
}

// ---------------------------------------------------------------------------

void FlexConfig::validate() const {
    if (curves < 1) throw std::invalid_argument("flexible: need at least one sampled curve");
    if (!(step > 0.0)) throw std::invalid_argument("flexible: grid step must be > 0");
    if (max_length && !(*max_length > 0.0))
        throw std::invalid_argument("flexible: max_length must be > 0");
    if (!(early_fraction > 0.0 && early_fraction < late_fraction && late_fraction < 1.0))
        throw std::invalid_argument("flexible: need 0 < early_fraction < late_fraction < 1");
    if (!(control_floor > 0.0 && control_floor < 1.0))
        throw std::invalid_argument("flexible: control_floor must lie in (0, 1)");
    if (max_attempts < 1) throw std::invalid_argument("flexible: max_attempts must be >= 1");
}

CurveBank::CurveBank(std::vector<DTEModel> rows, double step, double max_length)
    : rows_(std::move(rows)), step_(step), max_length_(max_length) {
    if (rows_.empty()) throw std::invalid_argument("curve bank needs at least one row");
    if (!(step > 0.0) || !(max_length > 0.0)) throw std::invalid_argument("invalid curve grid");
    columns_ = static_cast<std::size_t>(std::floor(max_length / step + 1e-9)) + 1;
}

std::size_t CurveBank::column_for(double t) const {
    const double c = std::round(t / step_);
    if (c <= 0.0) return 0;
    return std::min(columns_ - 1, static_cast<std::size_t>(c));
}

double CurveBank::value(std::size_t row, std::size_t column) const {
    return experimental_survival(static_cast<double>(column) * step_, rows_[row]);
}

std::vector<double> CurveBank::materialize() const {
    std::vector<double> out(rows_.size() * columns_);
    for (std::size_t r = 0; r < rows_.size(); ++r)
        for (std::size_t c = 0; c < columns_; ++c) out[r * columns_ + c] = value(r, c);
    return out;
}

double default_max_length(const ControlPriorSource& control, const EffectPrior& effect,
                          const RecruitmentModel& recruitment, std::uint64_t seed) {
    constexpr std::size_t kDraws = 20000;
    std::vector<double> pseudo;
    pseudo.reserve(2 * kDraws);
    for (std::size_t i = 0; i < kDraws; ++i) {
        auto rng = RandomStream::for_iteration(seed, kMaxLengthStream, i);
        const DTEModel m = draw_standard_model(control, effect, rng);
        pseudo.push_back(recruitment.quantile(rng.uniform()) +
                         sample_control_time(m.control, rng.uniform()));
        pseudo.push_back(recruitment.quantile(rng.uniform()) +
                         sample_experimental_time(m, rng.uniform()));
    }
    const auto k = static_cast<std::ptrdiff_t>(0.999 * static_cast<double>(pseudo.size() - 1));
    std::nth_element(pseudo.begin(), pseudo.begin() + k, pseudo.end());
    return 1.2 * pseudo[static_cast<std::size_t>(k)];
}

CurveBank build_curve_bank(const ControlPriorSource& control, const EffectPrior& effect,
                           const FlexConfig& flex, double max_length, std::uint64_t seed) {
    flex.validate();
    std::vector<DTEModel> rows;
    rows.reserve(flex.curves);
    for (std::size_t j = 0; j < flex.curves; ++j) {
        auto rng = RandomStream::for_iteration(seed, kCurveBankStream, j);
        rows.push_back(draw_standard_model(control, effect, rng));
    }
    return CurveBank(std::move(rows), flex.step, max_length);
}

CurveMatrix build_curve_matrix(const ControlPriorSource& control, const EffectPrior& effect,
                               const FlexConfig& flex, double max_length, std::uint64_t seed) {
    const CurveBank bank = build_curve_bank(control, effect, flex, max_length, seed);
    return {bank.rows(), bank.columns(), bank.step(), bank.materialize()};
}

double control_horizon(const WeibullParams& control, double level) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0, 1)");
    return std::pow(-std::log(level), 1.0 / control.shape()) / control.rate();
}

FlexSolveResult solve_flexible_params(double delay, double s1, double s2, double horizon,
                                      const WeibullParams& control, const FlexConfig& flex) {
    if (!(s1 > 0.0 && s1 < 1.0 && s2 > 0.0 && s2 < 1.0))
        throw std::invalid_argument("survival probabilities must lie in (0, 1)");
    if (!(s2 < s1)) throw std::invalid_argument("need s2 < s1");
    if (!(delay >= 0.0) || !(horizon > 0.0)) throw std::invalid_argument("invalid delay or horizon");

    const double t1 = flex.early_fraction * horizon;
    const double t2 = flex.late_fraction * horizon;
    if (t1 <= delay) return {FlexSolveStatus::early_point_before_delay, std::nullopt, 0.0};

    // Post-delay cumulative hazard each point must carry.
    const double pre = control_cumulative_hazard(delay, control);
    const double c1 = -std::log(s1) - pre;
    const double c2 = -std::log(s2) - pre;
    if (!(c1 > 0.0)) return {FlexSolveStatus::no_solution, std::nullopt, 0.0};
    const double target = std::log(c2 / c1);

    // log[(t2^g - T^g) / (t1^g - T^g)] is increasing in g; solve in log g.
    const double a = delay > 0.0 ? std::log(t2 / delay) : 0.0;
    const double b = delay > 0.0 ? std::log(t1 / delay) : 0.0;
    const double log_ratio_times = std::log(t2 / t1);
    auto log_ratio = [&](double log_g) {
        const double g = std::exp(log_g);
        if (delay == 0.0) return g * log_ratio_times;
        // expm1(g a) / expm1(g b), computed in logs to avoid overflow at large g
        auto log_expm1 = [](double x) { return x > 30.0 ? x + std::log1p(-std::exp(-x)) : std::log(std::expm1(x)); };
        return log_expm1(g * a) - log_expm1(g * b);
    };
    auto f = [&](double log_g) { return log_ratio(log_g) - target; };

    double lo = std::log(1e-3), hi = std::log(1e3);
    if (f(lo) >= 0.0 || f(hi) <= 0.0) return {FlexSolveStatus::no_solution, std::nullopt, 0.0};
    std::uintmax_t iters = 200;
    const auto root = boost::math::tools::toms748_solve(
        f, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
    const double g = std::exp(0.5 * (root.first + root.second));

    // rate_e^g (t1^g - T^g) = c1
    const double log_span1 = delay > 0.0 ? g * std::log(delay) + std::log(std::expm1(g * b))
                                         : g * std::log(t1);
    const double rate = std::exp((std::log(c1) - log_span1) / g);
    if (!std::isfinite(rate) || !(rate > 0.0)) return {FlexSolveStatus::no_solution, std::nullopt, 0.0};

    const WeibullParams exp_params(rate, g);
    const DTEModel m(control, delay, exp_params);
    const double r1 = std::abs(experimental_survival(t1, m) - s1);
    const double r2 = std::abs(experimental_survival(t2, m) - s2);
    const double res = std::max(r1, r2);
    if (!(res < 1e-8)) return {FlexSolveStatus::no_solution, std::nullopt, res};
    return {FlexSolveStatus::ok, exp_params, res};
}

DTEModel draw_flexible_model(const CurveBank& bank, const ControlPriorSource& control,
                             const EffectPrior& effect, const FlexConfig& flex,
                             RandomStream& rng) {
    const WeibullParams c = control.draw(rng);
    const double horizon = control_horizon(c, flex.control_floor);
    const std::size_t col1 = bank.column_for(flex.early_fraction * horizon);
    const std::size_t col2 = bank.column_for(flex.late_fraction * horizon);

    int early_failures = 0, no_solution = 0, ordering_failures = 0;
    for (int attempt = 0; attempt < flex.max_attempts; ++attempt) {
        const double s1 = bank.value(rng.index(bank.rows()), col1);
        double s2 = 1.0;
        bool ordered = false;
        for (int k = 0; k < flex.max_attempts; ++k) {
            s2 = bank.value(rng.index(bank.rows()), col2);
            if (s2 < s1) {
                ordered = true;
                break;
            }
        }
        const double delay = sample_scenario(effect, rng).delay;
        if (!ordered || !(s1 < 1.0) || !(s2 > 0.0)) {
            ++ordering_failures;
            continue;
        }
        const auto sol = solve_flexible_params(delay, s1, s2, horizon, c, flex);
        if (sol.status == FlexSolveStatus::ok) return DTEModel(c, delay, *sol.experimental);
        ++(sol.status == FlexSolveStatus::early_point_before_delay ? early_failures : no_solution);
    }
    std::ostringstream msg;
    msg << "flexible assurance: no solvable (s1, s2, T) after " << flex.max_attempts
        << " attempts (control rate " << c.rate() << ", shape " << c.shape() << "; "
        << early_failures << " delay beyond early point, " << no_solution << " no solution, "
        << ordering_failures << " unordered)";
    throw std::runtime_error(msg.str());
}

AssuranceResult flexible_assurance(const AssuranceConfig& cfg, const CurveBank& bank,
                                   const FlexConfig& flex, const RunOptions& opts) {
    flex.validate();
    return run_monte_carlo(cfg.iterations, cfg.seed, opts, [&](RandomStream& rng) {
        const DTEModel model = draw_flexible_model(bank, cfg.control, cfg.effect, flex, rng);
        const TrialDataset data = simulate_trial(cfg.design, model, rng);
        return is_success(run_test(data, cfg.test), cfg.test);
    });
}

AssuranceResult flexible_assurance(const AssuranceConfig& cfg, const FlexConfig& flex,
                                   const RunOptions& opts) {
    flex.validate();
    const double max_length = flex.max_length.value_or(
        default_max_length(cfg.control, cfg.effect, cfg.design.recruitment, cfg.seed));
    const CurveBank bank = build_curve_bank(cfg.control, cfg.effect, flex, max_length, cfg.seed);
    return flexible_assurance(cfg, bank, flex, opts);
}

}  // namespace dte
