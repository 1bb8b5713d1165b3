#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dte/random.hpp"
#include "dte/survival_model.hpp"
#include "oracles.hpp"

using namespace dte;

namespace {

// Random model with shapes on both sides of 1 and delays including zero.
DTEModel random_model(RandomStream& rng) {
    const WeibullParams c(0.02 + 0.2 * rng.uniform(), 0.4 + 2.0 * rng.uniform());
    const WeibullParams e(0.01 + 0.2 * rng.uniform(), 0.4 + 2.0 * rng.uniform());
    const double delay = rng.uniform() < 0.2 ? 0.0 : 10.0 * rng.uniform();
    return DTEModel(c, delay, e);
}

}  // namespace

TEST_CASE("WeibullParams rejects non-positive values") {
    CHECK_THROWS_AS(WeibullParams(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(WeibullParams(1.0, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(DTEModel(WeibullParams(1, 1), -0.5, WeibullParams(1, 1)), std::invalid_argument);
    const WeibullParams p(0.074, 1.21);
    CHECK(p.scale() == doctest::Approx(1.0 / 0.074));
    CHECK(control_survival(p.median(), p) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("control_survival") {
    const WeibullParams p(0.074, 1.21);
    CHECK(control_survival(0.0, p) == 1.0);
    CHECK(control_survival(1.0 / 0.074, p) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(control_survival(1.0 / 0.5, WeibullParams(0.5, 0.3)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    // 40-digit reference value of exp(-(0.74)^1.21)
    CHECK(std::abs(control_survival(10.0, p) - 0.49924568826710937074) < 1e-15);
    CHECK_THROWS_AS(control_survival(-1.0, p), std::invalid_argument);
}

TEST_CASE("control_hazard") {
    CHECK(control_hazard(2.0, WeibullParams(0.5, 2.0)) == doctest::Approx(1.0).epsilon(1e-15));
    for (double t : {0.0, 0.1, 3.0, 100.0}) CHECK(control_hazard(t, WeibullParams(0.3, 1.0)) == doctest::Approx(0.3));
    CHECK(control_hazard(0.0, WeibullParams(0.3, 2.0)) == 0.0);
    CHECK_THROWS_AS(control_hazard(0.0, WeibullParams(0.3, 0.5)), std::domain_error);

    SUBCASE("integral of hazard equals -log S") {
        for (const auto& p : {WeibullParams(0.074, 1.21), WeibullParams(0.2, 2.5), WeibullParams(0.1, 1.0)}) {
            for (double t : {0.5, 4.0, 20.0}) {
                const double integral = oracle::simpson([&](double u) { return control_hazard(u, p); }, 0.0, t, 1e-13);
                CHECK(std::abs(integral + std::log(control_survival(t, p))) < 1e-8);
            }
        }
    }
}

TEST_CASE("experimental_survival branches") {
    const WeibullParams c(0.074, 1.21);
    const DTEModel m = DTEModel::from_hazard_ratio(c, 4.0, 0.6);
    for (double t : {0.0, 1.0, 3.999, 4.0}) CHECK(experimental_survival(t, m) == control_survival(t, c));
    CHECK(std::abs(experimental_survival(4.0 + 1e-12, m) - control_survival(4.0, c)) < 1e-12);
    const DTEModel same(c, 0.0, c);
    for (double t : {0.5, 5.0, 50.0})
        CHECK(experimental_survival(t, same) == doctest::Approx(control_survival(t, c)).epsilon(1e-14));
}

TEST_CASE("hazard_ratio and lambda_e_from_hr") {
    const WeibullParams c(0.074, 1.21);
    const double rate_e = lambda_e_from_hr(0.074, 1.21, 0.6);
    CHECK(std::abs(rate_e - 0.048516073538709088970) < 1e-15);
    CHECK(lambda_e_from_hr(0.074, 1.21, 1.0) == 0.074);
    CHECK(lambda_e_from_hr(1.0, 1.0, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(lambda_e_from_hr(0.074, 1.21, 0.0), std::invalid_argument);
    CHECK(std::abs(std::pow(rate_e / 0.074, 1.21) - 0.6) < 1e-12);

    const DTEModel m(c, 4.0, WeibullParams(rate_e, 1.21));
    CHECK(hazard_ratio(3.0, m) == 1.0);
    CHECK(hazard_ratio(6.0, m) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(hazard_ratio(10.0, DTEModel(c, 2.0, c)) == 1.0);
    CHECK_THROWS_AS(hazard_ratio(0.0, m), std::invalid_argument);

    // constant post-delay ratio when the shapes agree
    const double first = hazard_ratio(4.5, m);
    for (int i = 1; i <= 100; ++i) CHECK(std::abs(hazard_ratio(4.0 + 0.37 * i, m) - first) < 1e-12);

    // general shapes: ratio of the two hazard functions
    const DTEModel g(c, 2.0, WeibullParams(0.05, 1.7));
    CHECK(hazard_ratio(5.0, g) == doctest::Approx(control_hazard(5.0, WeibullParams(0.05, 1.7)) /
                                                  control_hazard(5.0, c)));
}

TEST_CASE("inversion sampling") {
    const WeibullParams c(0.074, 1.21);
    CHECK(sample_control_time(WeibullParams(1.0, 1.0), std::exp(-1.0)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sample_control_time(c, 1.0 - 1e-15) < 1e-10);
    CHECK_THROWS_AS(sample_control_time(c, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(sample_experimental_time(DTEModel(c, 1.0, c), 1.0), std::invalid_argument);

    const DTEModel m = DTEModel::from_hazard_ratio(c, 4.0, 0.6);
    CHECK(sample_experimental_time(m, experimental_survival(4.0, m)) == doctest::Approx(4.0).epsilon(1e-12));

    const WeibullParams e(0.05, 1.21);
    const DTEModel no_delay(c, 0.0, e);
    for (double u : {0.1, 0.5, 0.9})
        CHECK(sample_experimental_time(no_delay, u) == doctest::Approx(std::pow(-std::log(u), 1.0 / 1.21) / 0.05));

    SUBCASE("round trip on random models") {
        RandomStream rng(11);
        for (int i = 0; i < 10000; ++i) {
            const DTEModel r = random_model(rng);
            const double u = rng.uniform();
            CHECK(std::abs(experimental_survival(sample_experimental_time(r, u), r) - u) < 1e-9);
            CHECK(std::abs(control_survival(sample_control_time(r.control, u), r.control) - u) < 1e-9);
        }
    }

    SUBCASE("control sample KS") {
        RandomStream rng(12);
        std::vector<double> xs(100000);
        for (auto& x : xs) x = sample_control_time(c, rng.uniform());
        CHECK(oracle::ks_distance(xs, [&](double t) { return 1.0 - control_survival(t, c); }) < 0.01);
    }
}

TEST_CASE("continuity and monotonicity on random parameters") {
    RandomStream rng(21);
    for (int i = 0; i < 1000; ++i) {
        DTEModel m = random_model(rng);
        if (m.delay == 0.0) m.delay = 1.0;
        CHECK(std::abs(experimental_survival(m.delay - 1e-8, m) - experimental_survival(m.delay + 1e-8, m)) < 1e-6);
    }
    for (int i = 0; i < 20; ++i) {
        const DTEModel m = random_model(rng);
        double prev_c = 1.0, prev_e = 1.0;
        for (int k = 0; k <= 10000; ++k) {
            const double t = 0.01 * k;
            const double sc = control_survival(t, m.control), se = experimental_survival(t, m);
            CHECK_LE(sc, prev_c);
            CHECK_LE(se, prev_e);
            prev_c = sc;
            prev_e = se;
        }
    }
}

TEST_CASE("hazard and survival agree on both sides of the delay") {
    const WeibullParams c(0.074, 1.21);
    for (const DTEModel& m : {DTEModel::from_hazard_ratio(c, 4.0, 0.6), DTEModel(c, 3.0, WeibullParams(0.04, 1.8)),
                              DTEModel(WeibullParams(0.1, 0.7), 2.5, WeibullParams(0.05, 0.9))}) {
        for (double t : {1.0, m.delay, m.delay + 0.5, 12.0, 30.0}) {
            double integral = 0.0;
            const double lo = 1e-12;
            if (t <= m.delay) {
                integral = oracle::simpson([&](double u) { return experimental_hazard(u, m); }, lo, t, 1e-13);
            } else {
                integral = oracle::simpson([&](double u) { return experimental_hazard(u, m); }, lo, m.delay, 1e-13) +
                           oracle::simpson([&](double u) { return experimental_hazard(u, m); }, m.delay, t, 1e-13);
            }
            // shape < 1 has an integrable singularity at 0; add the missing sliver analytically
            integral += control_cumulative_hazard(lo, m.control);
            CHECK(std::abs(integral + std::log(experimental_survival(t, m))) < 1e-6);
        }
    }
}
