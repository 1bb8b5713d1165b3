#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <numeric>
#include <sstream>

#include "dte/trial_sim.hpp"
#include "oracles.hpp"

using namespace dte;

TEST_CASE("recruitment models") {
    CHECK_THROWS_AS(RecruitmentModel::uniform(0.0), std::invalid_argument);
    CHECK_THROWS_AS(RecruitmentModel(PiecewiseRecruitment{{0, 1}, {1, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(RecruitmentModel(PiecewiseRecruitment{{1, 2}, {1}}), std::invalid_argument);
    CHECK_THROWS_AS(RecruitmentModel(PowerRecruitment{12, 0}), std::invalid_argument);

    const auto u = RecruitmentModel::uniform(12.0);
    CHECK(u.quantile(0.5) == doctest::Approx(6.0));
    CHECK(u.max_time() == 12.0);

    // rate 1 on [0,2), rate 3 on [2,4): mass 2 then 6
    const RecruitmentModel pw(PiecewiseRecruitment{{0, 2, 4}, {1, 3}});
    CHECK(pw.quantile(0.25) == doctest::Approx(2.0));
    CHECK(pw.quantile(0.125) == doctest::Approx(1.0));
    CHECK(pw.quantile(0.625) == doctest::Approx(3.0));
    CHECK(pw.max_time() == 4.0);

    const RecruitmentModel pr(PowerRecruitment{10.0, 2.0});
    CHECK(pr.quantile(0.25) == doctest::Approx(5.0));

    SUBCASE("sample moments and KS") {
        RandomStream rng(5);
        const auto r = sample_recruitment(u, 100000, rng);
        const double mean = std::accumulate(r.begin(), r.end(), 0.0) / r.size();
        double var = 0.0;
        for (double x : r) var += (x - mean) * (x - mean);
        var /= r.size() - 1;
        CHECK(std::abs(mean - 6.0) < 3.0 * std::sqrt(12.0 / r.size()));
        CHECK(var == doctest::Approx(12.0).epsilon(0.02));
        CHECK(std::all_of(r.begin(), r.end(), [](double x) { return x >= 0 && x <= 12.0; }));
        CHECK(oracle::ks_distance(r, [](double t) { return t / 12.0; }) < 0.01);

        const auto p = sample_recruitment(pw, 100000, rng);
        CHECK(oracle::ks_distance(p, [](double t) { return t < 2 ? t / 8.0 : 0.25 + 3.0 * (t - 2) / 8.0; }) < 0.01);
        const auto q = sample_recruitment(pr, 100000, rng);
        CHECK(oracle::ks_distance(q, [](double t) { return t * t / 100.0; }) < 0.01);
    }
}

TEST_CASE("TrialDesign validation") {
    CHECK_THROWS_AS(TrialDesign(0, 10, 5), std::invalid_argument);
    CHECK_THROWS_AS(TrialDesign(10, 10, 0), std::invalid_argument);
    CHECK_THROWS_AS(TrialDesign(10, 10, 21), std::invalid_argument);
    CHECK(TrialDesign(10, 10, 20).total() == 20);
}

TEST_CASE("build_analysis_set hand trace") {
    // pseudo event times: 5, 3, 12, 7 -> with E = 2 the cutoff is 5
    const std::vector<Arm> arms = {Arm::control, Arm::experimental, Arm::control, Arm::experimental};
    const std::vector<double> recruit = {0, 1, 2, 6};
    const std::vector<double> surv = {5, 2, 10, 1};
    const auto d = build_analysis_set(arms, recruit, surv, 2);
    CHECK(d.cutoff == 5.0);
    REQUIRE(d.subjects.size() == 3);
    CHECK(d.events() == 2);
    CHECK(d.subjects[0].event);
    CHECK(d.subjects[0].time == 5.0);
    CHECK(d.subjects[1].event);
    CHECK(d.subjects[1].time == 2.0);
    CHECK_FALSE(d.subjects[2].event);
    CHECK(d.subjects[2].time == 3.0);
    CHECK(d.subjects[2].recruit_time == 2.0);

    SUBCASE("ties are broken by subject index") {
        auto a2 = arms;
        auto r2 = recruit;
        auto s2 = surv;
        a2.push_back(Arm::experimental);
        r2.push_back(0);
        s2.push_back(5);
        const auto t = build_analysis_set(a2, r2, s2, 2);
        CHECK(t.cutoff == 5.0);
        REQUIRE(t.subjects.size() == 4);
        CHECK(t.events() == 2);
        CHECK(t.subjects[0].event);
        CHECK_FALSE(t.subjects[3].event);
        CHECK(t.subjects[3].time == 5.0);
    }
    CHECK_THROWS_AS(build_analysis_set(arms, recruit, surv, 5), std::invalid_argument);
    CHECK_THROWS_AS(build_analysis_set(arms, {0, 1}, surv, 2), std::invalid_argument);
}

TEST_CASE("event-driven censoring invariants") {
    RandomStream rng(17);
    const WeibullParams c(0.074, 1.21);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t nc = 5 + rng.index(60), ne = 5 + rng.index(60);
        const std::size_t e = 1 + rng.index(nc + ne);
        const double duration = 0.5 + 30.0 * rng.uniform();
        const TrialDesign design(nc, ne, e, RecruitmentModel::uniform(duration));
        const auto model = DTEModel::from_hazard_ratio(c, 5.0 * rng.uniform(), 0.3 + rng.uniform());
        const auto d = simulate_trial(design, model, rng);
        CHECK(d.events() == e);
        for (const auto& s : d.subjects) {
            CHECK(s.recruit_time <= d.cutoff);
            if (s.event) {
                CHECK(s.recruit_time + s.time <= d.cutoff);
            } else {
                CHECK(s.time == d.cutoff - s.recruit_time);
            }
        }
    }
}

TEST_CASE("simulate_trial under the null") {
    const WeibullParams c(0.074, 1.21);
    const TrialDesign design(20000, 20000, 40000, RecruitmentModel::uniform(12.0));
    RandomStream rng(23);
    const auto d = simulate_trial(design, DTEModel::null_effect(c), rng);
    std::vector<double> tc, te;
    for (const auto& s : d.subjects) (s.arm == Arm::control ? tc : te).push_back(s.time);
    CHECK(tc.size() == 20000);
    const double ks = oracle::ks_two_sample(tc, te);
    CHECK(oracle::ks_two_sample_pvalue(ks, tc.size(), te.size()) > 0.001);
    CHECK(oracle::ks_distance(tc, [&](double t) { return 1.0 - control_survival(t, c); }) < 0.015);
}

TEST_CASE("determinism and order invariance") {
    const WeibullParams c(0.074, 1.21);
    const TrialDesign design(50, 60, 70);
    const auto m = DTEModel::from_hazard_ratio(c, 3.0, 0.6);
    RandomStream a(99), b(99);
    const auto da = simulate_trial(design, m, a), db = simulate_trial(design, m, b);
    REQUIRE(da.subjects.size() == db.subjects.size());
    CHECK(da.cutoff == db.cutoff);
    for (std::size_t i = 0; i < da.subjects.size(); ++i) {
        CHECK(da.subjects[i].time == db.subjects[i].time);
        CHECK(da.subjects[i].event == db.subjects[i].event);
    }

    RandomStream rng(3);
    std::vector<Arm> arms(40);
    std::vector<double> r(40), s(40);
    for (std::size_t i = 0; i < 40; ++i) {
        arms[i] = i % 2 ? Arm::control : Arm::experimental;
        r[i] = 10 * rng.uniform();
        s[i] = 20 * rng.uniform();
    }
    std::vector<std::size_t> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    std::vector<Arm> pa(40);
    std::vector<double> pr(40), ps(40);
    for (std::size_t i = 0; i < 40; ++i) {
        pa[i] = arms[perm[i]];
        pr[i] = r[perm[i]];
        ps[i] = s[perm[i]];
    }
    const auto x = build_analysis_set(arms, r, s, 25), y = build_analysis_set(pa, pr, ps, 25);
    CHECK(x.cutoff == y.cutoff);
    CHECK(x.subjects.size() == y.subjects.size());
    CHECK(y.events() == 25);
}

TEST_CASE("dataset conversion and CSV") {
    const auto d = build_analysis_set({Arm::control, Arm::experimental, Arm::control}, {0, 0, 4}, {4, 6, 1}, 1);
    // subject 2 is recruited at the cutoff and censored at zero
    REQUIRE(d.subjects.size() == 3);
    const auto sd = d.to_survival_dataset();
    CHECK(sd.size() == 2);
    CHECK(sd.records()[0].arm == Arm::control);

    std::ostringstream out;
    write_trial_csv(out, d);
    const std::string csv = out.str();
    CHECK(csv.rfind("arm,recruit_time,time,event\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
