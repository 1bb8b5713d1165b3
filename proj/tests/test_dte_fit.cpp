#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "dte/dte_fit.hpp"

using namespace dte;

namespace {

const WeibullParams kControl(0.074, 1.21);

SurvivalDataset simulated(const DTEModel& m, std::size_t n_per_arm, std::uint64_t seed) {
    RandomStream rng(seed);
    const TrialDesign design(n_per_arm, n_per_arm, static_cast<std::size_t>(1.8 * n_per_arm));
    return simulate_trial(design, m, rng).to_survival_dataset();
}

}  // namespace

TEST_CASE("fit_control recovers the control curve") {
    const auto d = simulated(DTEModel::from_hazard_ratio(kControl, 3.0, 0.6), 5000, 1);
    const auto c = fit_control(d);
    CHECK(std::abs(c.rate() / 0.074 - 1.0) < 0.03);
    CHECK(std::abs(c.shape() / 1.21 - 1.0) < 0.03);
}

TEST_CASE("method A") {
    SUBCASE("recovers the experimental rate under a shared shape") {
        const auto truth = DTEModel::from_hazard_ratio(kControl, 3.0, 0.6);
        const auto fit = fit_method_a(simulated(truth, 5000, 2), 3.0);
        CHECK(fit.method == FitMethod::A);
        CHECK(fit.converged);
        CHECK(fit.experimental.shape() == fit.control.shape());
        CHECK(std::abs(fit.experimental.rate() / truth.experimental.rate() - 1.0) < 0.05);
        CHECK(fit.goodness == doctest::Approx(dte_goodness(simulated(truth, 5000, 2), fit.model())));
    }
    SUBCASE("no effect gives matching rates") {
        const auto fit = fit_method_a(simulated(DTEModel::null_effect(kControl), 5000, 3), 3.0);
        CHECK(std::abs(fit.experimental.rate() / fit.control.rate() - 1.0) < 0.05);
    }
    SUBCASE("invalid input") {
        const auto d = simulated(DTEModel::null_effect(kControl), 100, 4);
        CHECK_THROWS_AS(fit_method_a(d, 1e6), std::invalid_argument);
        CHECK_THROWS_AS(fit_method_a(SurvivalDataset({{1.0, true, "", std::nullopt}}), 0.5), std::invalid_argument);
    }
}

TEST_CASE("method B") {
    SUBCASE("recovers a different experimental shape") {
        const DTEModel truth(kControl, 3.0, WeibullParams(0.05, 1.5 * 1.21));
        const auto d = simulated(truth, 5000, 5);
        for (auto est : {FreeShapeEstimator::least_squares, FreeShapeEstimator::maximum_likelihood}) {
            const auto fit = fit_method_b(d, 3.0, est);
            CHECK(fit.method == FitMethod::B);
            CHECK(std::abs(fit.experimental.shape() / truth.experimental.shape() - 1.0) < 0.10);
            CHECK(std::abs(fit.experimental.rate() / truth.experimental.rate() - 1.0) < 0.10);
        }
    }
    SUBCASE("nested in method A") {
        for (std::uint64_t seed = 10; seed < 30; ++seed) {
            const auto d = simulated(DTEModel::from_hazard_ratio(kControl, 2.0 + 0.2 * (seed % 7), 0.7), 300, seed);
            const auto a = fit_method_a(d, 3.0);
            const auto b = fit_method_b(d, 3.0);
            CHECK(b.goodness <= a.goodness);
            CHECK(b.control == a.control);
        }
    }
}

TEST_CASE("compare_power") {
    const auto d = simulated(DTEModel::from_hazard_ratio(kControl, 3.0, 0.6), 400, 40);
    const auto a = fit_method_a(d, 3.0);
    const auto grid = balanced_grid({100, 200}, 0.75);
    const auto same = compare_power(a, a, grid, RecruitmentModel::uniform(12), TestSpec::log_rank(), 300, 8);
    REQUIRE(same.size() == 2);
    for (const auto& p : same) CHECK(p.method_a.successes == p.method_b.successes);
    CHECK(same[1].design == grid[1]);
    const auto b = fit_method_b(d, 3.0);
    const auto both = compare_power(a, b, grid, RecruitmentModel::uniform(12), TestSpec::log_rank(), 300, 8);
    CHECK(both[0].method_a.successes == same[0].method_a.successes);
}
