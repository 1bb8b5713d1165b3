#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "dte/analysis.hpp"
#include "dte/elicitation.hpp"
#include "dte/random.hpp"
#include "dte/survival_model.hpp"
#include "dte/trial_sim.hpp"

namespace dte {

/// Where each iteration's control parameters come from: a fixed value, or a
/// posterior sample drawn from with replacement.
class ControlPriorSource {
   public:
    static ControlPriorSource fixed(const WeibullParams& p);
    static ControlPriorSource sampled(std::vector<WeibullParams> draws);

    bool is_fixed() const noexcept { return draws_->size() == 1 && fixed_; }
    const std::vector<WeibullParams>& draws() const noexcept { return *draws_; }

    // Consumes no randomness for the fixed form.
    WeibullParams draw(RandomStream& rng) const;

   private:
    ControlPriorSource(std::shared_ptr<const std::vector<WeibullParams>> d, bool fixed)
        : draws_(std::move(d)), fixed_(fixed) {}
    std::shared_ptr<const std::vector<WeibullParams>> draws_;
    bool fixed_;
};

struct AssuranceConfig {
    TrialDesign design;
    ControlPriorSource control;
    EffectPrior effect;
    TestSpec test;
    std::size_t iterations;
    std::uint64_t seed;
};

struct AssuranceResult {
    double estimate = 0.0;
    double mc_se = 0.0;
    std::size_t iterations = 0;
    std::size_t successes = 0;

    static AssuranceResult from_tally(std::size_t successes, std::size_t iterations);
};

struct RunOptions {
    unsigned threads = 1;
    // Stream index mixed into every per-iteration seed; grid points without
    // common random numbers get distinct streams.
    std::uint64_t sub_stream = 0;
    // Called with (iterations done, successes so far); may be invoked from
    // worker threads but never concurrently.
    std::function<void(std::size_t, std::size_t)> progress;
};

/*
 * Runs `trial` for iterations 0..n-1, each with its own stream derived from
 * (seed, sub_stream, iteration), and tallies successes. The tally does not
 * depend on the thread count.
 */
AssuranceResult run_monte_carlo(std::size_t n, std::uint64_t seed, const RunOptions& opts,
                                const std::function<bool(RandomStream&)>& trial);

/// One draw of the data-generating model: control parameters, scenario, and
/// the experimental rate implied by HR* with the shape shared.
DTEModel draw_standard_model(const ControlPriorSource& control, const EffectPrior& effect,
                             RandomStream& rng);

AssuranceResult assurance(const AssuranceConfig& cfg, const RunOptions& opts = {});

/// Point-mass parameters for a classical power calculation.
struct FixedEffect {
    WeibullParams control;
    double delay;
    double hazard_ratio;
};

AssuranceResult power(const TrialDesign& design, const DTEModel& model, const TestSpec& test,
                      std::size_t iterations, std::uint64_t seed, const RunOptions& opts = {});
AssuranceResult power(const TrialDesign& design, const FixedEffect& effect, const TestSpec& test,
                      std::size_t iterations, std::uint64_t seed, const RunOptions& opts = {});

struct DesignPoint {
    std::size_t n_control;
    std::size_t n_experimental;
    std::size_t events;

    friend bool operator==(const DesignPoint&, const DesignPoint&) = default;
};

struct CurvePoint {
    DesignPoint design;
    AssuranceResult result;
};

// Grid of n per arm with events = round(event_fraction * 2n).
std::vector<DesignPoint> balanced_grid(const std::vector<std::size_t>& n_per_arm,
                                       double event_fraction);

/// One result per grid point; the recruitment model comes from cfg.design.
/// With common random numbers every point reuses the same iteration streams.
std::vector<CurvePoint> assurance_curve(const AssuranceConfig& cfg,
                                        const std::vector<DesignPoint>& grid,
                                        bool common_random_numbers = true,
                                        const RunOptions& opts = {});

std::vector<CurvePoint> power_curve(const DTEModel& model, const RecruitmentModel& recruitment,
                                    const std::vector<DesignPoint>& grid, const TestSpec& test,
                                    std::size_t iterations, std::uint64_t seed,
                                    bool common_random_numbers = true,
                                    const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// Flexible assurance: experimental curves not constrained to the control shape.

struct FlexConfig {
    std::size_t curves = 5000;          // M
    std::optional<double> max_length;   // L_max; derived from the prior when unset
    double step = 0.01;
    double early_fraction = 0.25;
    double late_fraction = 0.6;
    double control_floor = 0.01;        // F solves S_c(F) = control_floor
    int max_attempts = 1000;

    void validate() const;
};

/*
 * The M sampled experimental survival curves on the grid 0, step, ..., L_max.
 * Rows are stored as the generating models and evaluated on demand, which
 * gives the same values as a dense M x grid matrix without holding it.
 */
class CurveBank {
   public:
    CurveBank(std::vector<DTEModel> rows, double step, double max_length);

    std::size_t rows() const noexcept { return rows_.size(); }
    std::size_t columns() const noexcept { return columns_; }
    double step() const noexcept { return step_; }
    double max_length() const noexcept { return max_length_; }
    const std::vector<DTEModel>& models() const noexcept { return rows_; }

    // Column nearest to time t, clamped to the grid.
    std::size_t column_for(double t) const;
    double value(std::size_t row, std::size_t column) const;

    // Dense row-major M x columns matrix.
    std::vector<double> materialize() const;

   private:
    std::vector<DTEModel> rows_;
    double step_;
    double max_length_;
    std::size_t columns_;
};

// 1.2 x the 99.9th percentile of prior-predictive pseudo event times.
double default_max_length(const ControlPriorSource& control, const EffectPrior& effect,
                          const RecruitmentModel& recruitment, std::uint64_t seed);

CurveBank build_curve_bank(const ControlPriorSource& control, const EffectPrior& effect,
                           const FlexConfig& flex, double max_length, std::uint64_t seed);

/// Dense matrix A (row-major, curves x grid columns).
struct CurveMatrix {
    std::size_t rows;
    std::size_t columns;
    double step;
    std::vector<double> values;

    double at(std::size_t r, std::size_t c) const { return values[r * columns + c]; }
};

CurveMatrix build_curve_matrix(const ControlPriorSource& control, const EffectPrior& effect,
                               const FlexConfig& flex, double max_length, std::uint64_t seed);

enum class FlexSolveStatus { ok, early_point_before_delay, no_solution };

struct FlexSolveResult {
    FlexSolveStatus status;
    std::optional<WeibullParams> experimental;
    double max_residual = 0.0;
};

/// (rate_e, shape_e) with S_e(early * F) = s1 and S_e(late * F) = s2 for the
/// given delay and control curve. Requires 0 < s2 < s1 < 1.
FlexSolveResult solve_flexible_params(double delay, double s1, double s2, double horizon,
                                      const WeibullParams& control, const FlexConfig& flex);

// Time at which control survival reaches `level`.
double control_horizon(const WeibullParams& control, double level);

/// One flexible draw: control, F, (s1, s2) from the bank, T, then the solve.
/// Throws std::runtime_error after flex.max_attempts failed attempts.
DTEModel draw_flexible_model(const CurveBank& bank, const ControlPriorSource& control,
                             const EffectPrior& effect, const FlexConfig& flex,
                             RandomStream& rng);

AssuranceResult flexible_assurance(const AssuranceConfig& cfg, const FlexConfig& flex,
                                   const RunOptions& opts = {});
AssuranceResult flexible_assurance(const AssuranceConfig& cfg, const CurveBank& bank,
                                   const FlexConfig& flex, const RunOptions& opts = {});

}  // namespace dte
