#pragma once

#include <vector>

#include "dte/analysis.hpp"
#include "dte/assurance.hpp"
#include "dte/control_posterior.hpp"
#include "dte/survival_model.hpp"

namespace dte {

enum class FitMethod {
    A,   // experimental shape tied to control; rate by least squares to the KM curve
    B,   // experimental rate and shape free
};

struct DTEFit {
    FitMethod method;
    double delay;
    WeibullParams control;
    WeibullParams experimental;
    // Sum of squared differences between the fitted experimental curve and
    // the experimental-arm Kaplan-Meier estimate at its event times after the
    // delay.
    double goodness;
    bool converged;

    DTEModel model() const { return DTEModel(control, delay, experimental); }
};

// Censored Weibull MLE on the control arm (records with arm == control, or
// all records when no arm labels are present).
WeibullParams fit_control(const SurvivalDataset& data);

DTEFit fit_method_a(const SurvivalDataset& data, double delay);

enum class FreeShapeEstimator {
    // Joint least squares to the KM curve on Method A's grid, started from
    // Method A's solution; goodness(B) <= goodness(A) always holds.
    least_squares,
    // Censored likelihood of the experimental arm under the delayed model,
    // control curve fixed. Not nested with Method A's least-squares loss.
    maximum_likelihood,
};

DTEFit fit_method_b(const SurvivalDataset& data, double delay,
                    FreeShapeEstimator estimator = FreeShapeEstimator::least_squares);

// Least-squares goodness of an arbitrary experimental curve on the same grid.
double dte_goodness(const SurvivalDataset& data, const DTEModel& model);

struct PowerComparison {
    DesignPoint design;
    AssuranceResult method_a;
    AssuranceResult method_b;
};

/// Point-mass power under each fit across the grid; both curves use the same
/// iteration streams.
std::vector<PowerComparison> compare_power(const DTEFit& fit_a, const DTEFit& fit_b,
                                           const std::vector<DesignPoint>& grid,
                                           const RecruitmentModel& recruitment,
                                           const TestSpec& test, std::size_t iterations,
                                           std::uint64_t seed, const RunOptions& opts = {});

}  // namespace dte
