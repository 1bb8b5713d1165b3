#include "dte/elicitation.hpp"

#include <boost/math/distributions/gamma.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dte/optimize.hpp"

namespace dte {

QuantileJudgements::QuantileJudgements(std::vector<double> probabilities,
                                       std::vector<double> quantiles)
    : probabilities_(std::move(probabilities)), quantiles_(std::move(quantiles)) {
    if (probabilities_.size() != quantiles_.size())
        throw std::invalid_argument("probabilities and quantiles must have equal length");
    if (quantiles_.size() < 2) throw std::invalid_argument("at least two judgements are required");
    for (std::size_t i = 0; i < quantiles_.size(); ++i) {
        const double p = probabilities_[i], q = quantiles_[i];
        if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probabilities must lie in (0, 1)");
        if (!(q > 0.0) || !std::isfinite(q)) throw std::invalid_argument("quantiles must be positive");
        if (i > 0 && !(p > probabilities_[i - 1]))
            throw std::invalid_argument("probabilities must be strictly increasing");
        if (i > 0 && !(q > quantiles_[i - 1]))
            throw std::invalid_argument("quantiles must be strictly increasing");
    }
}

GammaDist::GammaDist(double shape, double rate) : shape_(shape), rate_(rate) {
    if (!(shape > 0.0 && std::isfinite(shape)) || !(rate > 0.0 && std::isfinite(rate)))
        throw std::invalid_argument("Gamma shape and rate must be positive");
}

double GammaDist::cdf(double x) const {
    if (x <= 0.0) return 0.0;
    return boost::math::gamma_p(shape_, rate_ * x);
}

double gamma_quantile(const GammaDist& g, double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probability must lie in (0, 1)");
    return boost::math::gamma_p_inv(g.shape(), p) / g.rate();
}

double gamma_fit_objective(const GammaDist& g, const QuantileJudgements& j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const double r = g.cdf(j.quantiles()[i]) - j.probabilities()[i];
        ss += r * r;
    }
    return ss;
}

GammaFit fit_gamma_to_quantiles(const QuantileJudgements& j) {
    // Moment-matched start: treat the judgements as a crude sample of the
    // distribution, with the median judgement standing in for the mean.
    const auto& q = j.quantiles();
    const auto& p = j.probabilities();
    std::size_t mid = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (std::abs(p[i] - 0.5) < std::abs(p[mid] - 0.5)) mid = i;
    const double centre = q[mid];
    const double spread = (q.back() - q.front()) / std::max(p.back() - p.front(), 1e-3) / 2.5;
    const double cv2 = std::pow(spread / centre, 2.0);
    const double shape0 = std::clamp(1.0 / cv2, 1e-2, 1e6);
    const double rate0 = shape0 / centre;

    auto objective = [&](const std::vector<double>& x) {
        const double a = std::exp(x[0]), b = std::exp(x[1]);
        if (!std::isfinite(a) || !std::isfinite(b) || a <= 0.0 || b <= 0.0)
            return std::numeric_limits<double>::infinity();
        return gamma_fit_objective(GammaDist(a, b), j);
    };

    SimplexOptions opts;
    opts.f_tol = 1e-8;
    opts.x_tol = 1e-12;
    SimplexResult best;
    best.value = std::numeric_limits<double>::infinity();
    const double starts[][2] = {{0.0, 0.0}, {1.0, 1.0}, {-1.0, -1.0}, {2.0, 0.0}, {-2.0, 0.0}};
    for (const auto& s : starts) {
        std::vector<double> x0 = {std::log(shape0) + s[0], std::log(rate0) + s[1]};
        SimplexResult r = nelder_mead(objective, x0, opts);
        // Restart from the incumbent until it stops moving.
        for (int k = 0; k < 20; ++k) {
            opts.initial_step = 0.05;
            SimplexResult again = nelder_mead(objective, r.x, opts);
            opts.initial_step = 0.5;
            const bool improved = again.value < r.value - 1e-16;
            if (again.value <= r.value) r = again;
            if (!improved) break;
        }
        if (r.value < best.value) best = r;
    }

    GammaDist g(std::exp(best.x[0]), std::exp(best.x[1]));
    std::vector<double> feedback;
    feedback.reserve(p.size());
    for (double pi : p) feedback.push_back(gamma_quantile(g, pi));
    return {g, best.value, std::move(feedback), best.converged};
}

EffectPrior::EffectPrior(double p_separation, double p_delay, GammaDist delay_dist,
                         GammaDist hr_dist)
    : p_separation(p_separation), p_delay(p_delay), delay_dist(delay_dist), hr_dist(hr_dist) {
    if (!(p_separation >= 0.0 && p_separation <= 1.0))
        throw std::invalid_argument("p_separation must lie in [0, 1]");
    if (!(p_delay >= 0.0 && p_delay <= 1.0))
        throw std::invalid_argument("p_delay must lie in [0, 1]");
}

Scenario sample_scenario(const EffectPrior& prior, RandomStream& rng) {
    if (!(rng.uniform() < prior.p_separation)) return {false, 0.0, 1.0};
    const bool has_delay = rng.uniform() < prior.p_delay;
    const double delay = has_delay ? prior.delay_dist.sample(rng) : 0.0;
    const double hr = prior.hr_dist.sample(rng);
    return {true, delay, hr};
}

}  // namespace dte
