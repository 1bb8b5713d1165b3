#pragma once

#include <cstddef>

#include "dte/trial_sim.hpp"

namespace dte {

enum class TestKind { log_rank, fleming_harrington };

struct TestSpec {
    TestKind kind = TestKind::log_rank;
    double rho = 0.0;     // weight exponent on S(t-)
    double gamma = 0.0;   // weight exponent on 1 - S(t-)
    double alpha = 0.025; // one-sided

    TestSpec() = default;
    TestSpec(TestKind kind, double rho, double gamma, double alpha = 0.025);

    static TestSpec log_rank(double alpha = 0.025) { return {TestKind::log_rank, 0.0, 0.0, alpha}; }
    static TestSpec fleming_harrington(double rho, double gamma, double alpha = 0.025) {
        return {TestKind::fleming_harrington, rho, gamma, alpha};
    }
};

struct TestResult {
    double z = 0.0;         // > 0 favours the experimental arm
    double p_value = 1.0;   // one-sided, 1 - Phi(z)
    std::size_t events_control = 0;
    std::size_t events_experimental = 0;
    bool degenerate = false;  // zero weighted variance; z and p are not meaningful
};

/*
 * Fleming-Harrington G(rho, gamma) weighted log-rank statistic.
 *
 * At each distinct event time t_k the pooled left-continuous Kaplan-Meier
 * estimate S(t_k-) gives weight w_k = S^rho (1 - S)^gamma; the score sums
 * w_k (O_k - E_k) for control deaths and the variance sums w_k^2 V_k with
 * the hypergeometric V_k (tied deaths included).
 */
TestResult weighted_logrank(const TrialDataset& data, double rho, double gamma);

TestResult run_test(const TrialDataset& data, const TestSpec& spec);

// Strict: p < alpha and z > 0; degenerate results never succeed.
bool is_success(const TestResult& r, const TestSpec& spec);

}  // namespace dte
