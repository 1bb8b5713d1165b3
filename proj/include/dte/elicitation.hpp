#pragma once

#include <vector>

#include "dte/random.hpp"

namespace dte {

/// Expert judgements as points on a cumulative distribution function:
/// P(X <= quantiles[i]) = probabilities[i].
class QuantileJudgements {
   public:
    QuantileJudgements(std::vector<double> probabilities, std::vector<double> quantiles);

    const std::vector<double>& probabilities() const noexcept { return probabilities_; }
    const std::vector<double>& quantiles() const noexcept { return quantiles_; }
    std::size_t size() const noexcept { return quantiles_.size(); }

   private:
    std::vector<double> probabilities_;
    std::vector<double> quantiles_;
};

/// Gamma(shape, rate), mean shape / rate.
class GammaDist {
   public:
    GammaDist(double shape, double rate);

    double shape() const noexcept { return shape_; }
    double rate() const noexcept { return rate_; }
    double mean() const noexcept { return shape_ / rate_; }

    double cdf(double x) const;
    double sample(RandomStream& rng) const { return rng.gamma(shape_, rate_); }

    friend bool operator==(const GammaDist&, const GammaDist&) = default;

   private:
    double shape_;
    double rate_;
};

double gamma_quantile(const GammaDist& g, double p);

struct GammaFit {
    GammaDist dist;
    double objective;               // sum of squared CDF residuals
    std::vector<double> feedback;   // fitted quantiles at the elicited probabilities
    bool converged;
};

/// Least-squares fit on the CDF scale: minimizes sum_i (F(q_i; a, b) - p_i)^2.
GammaFit fit_gamma_to_quantiles(const QuantileJudgements& j);

/// Objective used by the fit, exposed for diagnostics and tests.
double gamma_fit_objective(const GammaDist& g, const QuantileJudgements& j);

/*
 * Three-level prior on the treatment effect:
 *   separation ~ Bernoulli(p_separation);
 *   given separation, a delay exists with probability p_delay, in which case
 *   T ~ delay_dist, else T = 0;
 *   given separation, HR* ~ hr_dist, independent of T.
 * Without separation T = 0 and HR* = 1.
 */
struct EffectPrior {
    double p_separation;
    double p_delay;
    GammaDist delay_dist;
    GammaDist hr_dist;

    EffectPrior(double p_separation, double p_delay, GammaDist delay_dist, GammaDist hr_dist);
};

struct Scenario {
    bool separated;
    double delay;
    double hr_star;
};

/// Draw order: separation, delay indicator, T, HR*. Each uses the stream
/// only when its branch is taken.
Scenario sample_scenario(const EffectPrior& prior, RandomStream& rng);

}  // namespace dte
