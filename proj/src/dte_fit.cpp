#include "dte/dte_fit.hpp"

#include "dte/optimize.hpp"

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dte {

namespace {

bool has_arm_labels(const SurvivalDataset& d) {
    return std::any_of(d.records().begin(), d.records().end(),
                       [](const auto& r) { return r.arm.has_value(); });
}

SurvivalDataset experimental_arm(const SurvivalDataset& data) {
    if (!has_arm_labels(data)) throw std::invalid_argument("DTE fit needs an arm column");
    auto e = data.arm(Arm::experimental);
    if (e.size() == 0) throw std::invalid_argument("no experimental-arm records");
    return e;
}

struct KmTarget {
    std::vector<double> times;
    std::vector<double> survival;
};

KmTarget km_after_delay(const SurvivalDataset& exp_arm, double delay) {
    KmTarget out;
    for (const auto& s : kaplan_meier(exp_arm)) {
        if (s.time <= delay) continue;
        out.times.push_back(s.time);
        out.survival.push_back(s.survival);
    }
    if (out.times.empty())
        throw std::invalid_argument("no experimental events after the supplied delay");
    return out;
}

double squared_error(const KmTarget& km, const DTEModel& m) {
    double ss = 0.0;
    for (std::size_t i = 0; i < km.times.size(); ++i) {
        const double r = experimental_survival(km.times[i], m) - km.survival[i];
        ss += r * r;
    }
    return ss;
}

// Brent minimization on [lo, hi] after a coarse scan to pick the basin.
template <class F>
std::pair<double, double> minimize_1d(F f, double lo, double hi, int scan = 64) {
    double best_x = lo, best_f = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= scan; ++i) {
        const double x = lo + (hi - lo) * i / scan;
        const double v = f(x);
        if (v < best_f) {
            best_f = v;
            best_x = x;
        }
    }
    const double h = (hi - lo) / scan;
    const auto r = boost::math::tools::brent_find_minima(f, std::max(lo, best_x - h),
                                                         std::min(hi, best_x + h), 52);
    return r.second <= best_f ? r : std::make_pair(best_x, best_f);
}

}  // namespace

WeibullParams fit_control(const SurvivalDataset& data) {
    if (!has_arm_labels(data)) return weibull_mle(data).params;
    return weibull_mle(data.arm(Arm::control)).params;
}

double dte_goodness(const SurvivalDataset& data, const DTEModel& model) {
    return squared_error(km_after_delay(experimental_arm(data), model.delay), model);
}

DTEFit fit_method_a(const SurvivalDataset& data, double delay) {
    if (!(delay >= 0.0)) throw std::invalid_argument("delay must be >= 0");
    const WeibullParams control = fit_control(data);
    const KmTarget km = km_after_delay(experimental_arm(data), delay);

    const double shape = control.shape();
    auto loss = [&](double log_rate) {
        return squared_error(km, DTEModel(control, delay, WeibullParams(std::exp(log_rate), shape)));
    };
    const double centre = std::log(control.rate());
    const auto [log_rate, value] = minimize_1d(loss, centre - 6.0, centre + 6.0);
    return {FitMethod::A, delay, control, WeibullParams(std::exp(log_rate), shape), value, true};
}

namespace {

// Experimental (rate, shape) maximizing the censored likelihood of the
// post-delay branch; the shape is profiled out.
std::pair<WeibullParams, bool> experimental_mle(const SurvivalDataset& exp_arm, double delay) {
    std::vector<double> post_times;
    double n_events = 0.0, sum_log_events = 0.0;
    for (const auto& r : exp_arm.records()) {
        if (r.time <= delay) continue;
        post_times.push_back(r.time);
        if (r.event) {
            n_events += 1.0;
            sum_log_events += std::log(r.time);
        }
    }
    if (n_events < 1.0) throw std::invalid_argument("no experimental events after the supplied delay");
    const double t_max = *std::max_element(post_times.begin(), post_times.end());

    // log sum_{t > T} (t^g - T^g), scaled by t_max^g for range.
    auto log_exposure = [&](double g) {
        const double log_scale = g * std::log(t_max);
        const double tail = delay > 0.0 ? std::exp(g * std::log(delay) - log_scale) : 0.0;
        double s = 0.0;
        for (double t : post_times) s += std::exp(g * std::log(t) - log_scale) - tail;
        return std::log(s) + log_scale;
    };
    // rate^g = n_events / exposure at the profile maximum.
    auto neg_profile = [&](double log_g) {
        const double g = std::exp(log_g);
        const double log_rate_g = std::log(n_events) - log_exposure(g);
        const double ll = n_events * std::log(g) + n_events * log_rate_g +
                          (g - 1.0) * sum_log_events - n_events;
        return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
    };
    const double lo = std::log(0.02), hi = std::log(50.0);
    const auto [log_g, value] = minimize_1d(neg_profile, lo, hi, 128);
    const double g = std::exp(log_g);
    const double rate = std::exp((std::log(n_events) - log_exposure(g)) / g);
    const bool interior = log_g > lo + 1e-6 && log_g < hi - 1e-6;
    return {WeibullParams(rate, g), std::isfinite(value) && interior};
}

}  // namespace

DTEFit fit_method_b(const SurvivalDataset& data, double delay, FreeShapeEstimator estimator) {
    if (!(delay >= 0.0)) throw std::invalid_argument("delay must be >= 0");
    const SurvivalDataset exp_arm = experimental_arm(data);
    const auto [mle, mle_ok] = experimental_mle(exp_arm, delay);
    const WeibullParams control = fit_control(data);

    if (estimator == FreeShapeEstimator::maximum_likelihood) {
        const DTEModel m(control, delay, mle);
        return {FitMethod::B, delay, control, mle, dte_goodness(data, m), mle_ok};
    }

    const KmTarget km = km_after_delay(exp_arm, delay);
    auto loss = [&](const std::vector<double>& x) {
        const double rate = std::exp(x[0]), shape = std::exp(x[1]);
        if (!std::isfinite(rate) || !std::isfinite(shape) || rate <= 0.0 || shape <= 0.0)
            return std::numeric_limits<double>::infinity();
        return squared_error(km, DTEModel(control, delay, WeibullParams(rate, shape)));
    };
    const DTEFit a = fit_method_a(data, delay);
    SimplexOptions opts;
    opts.f_tol = 1e-12;
    opts.x_tol = 1e-10;
    opts.initial_step = 0.1;
    SimplexResult best{{std::log(a.experimental.rate()), std::log(a.experimental.shape())},
                       a.goodness, 0, true};
    const std::vector<std::vector<double>> starts = {
        best.x, {std::log(mle.rate()), std::log(mle.shape())}};
    for (const auto& x0 : starts) {
        SimplexResult r = nelder_mead(loss, x0, opts);
        for (int k = 0; k < 10; ++k) {
            SimplexResult again = nelder_mead(loss, r.x, opts);
            if (!(again.value < r.value)) break;
            r = again;
        }
        if (r.value < best.value) best = r;
    }
    const WeibullParams experimental(std::exp(best.x[0]), std::exp(best.x[1]));
    return {FitMethod::B, delay, control, experimental, best.value, best.converged};
}

std::vector<PowerComparison> compare_power(const DTEFit& fit_a, const DTEFit& fit_b,
                                           const std::vector<DesignPoint>& grid,
                                           const RecruitmentModel& recruitment,
                                           const TestSpec& test, std::size_t iterations,
                                           std::uint64_t seed, const RunOptions& opts) {
    const auto a = power_curve(fit_a.model(), recruitment, grid, test, iterations, seed, true, opts);
    const auto b = power_curve(fit_b.model(), recruitment, grid, test, iterations, seed, true, opts);
    std::vector<PowerComparison> out;
    for (std::size_t i = 0; i < grid.size(); ++i) out.push_back({grid[i], a[i].result, b[i].result});
    return out;
}

}  // namespace dte
