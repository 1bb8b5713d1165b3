#include "dte/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace dte {

TestSpec::TestSpec(TestKind kind, double rho, double gamma, double alpha)
    : kind(kind), rho(rho), gamma(gamma), alpha(alpha) {
    if (!(rho >= 0.0) || !(gamma >= 0.0)) throw std::invalid_argument("FH exponents must be >= 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (kind == TestKind::log_rank && (rho != 0.0 || gamma != 0.0))
        throw std::invalid_argument("log-rank test takes no weight exponents");
}

namespace {

double weight(double s, double rho, double gamma) {
    // pow(0, 0) == 1 keeps FH(0, 0) identical to the unweighted statistic.
    return std::pow(s, rho) * std::pow(1.0 - s, gamma);
}

}  // namespace

TestResult weighted_logrank(const TrialDataset& data, double rho, double gamma) {
    struct Obs {
        double time;
        bool control;
        bool event;
    };
    std::vector<Obs> obs;
    obs.reserve(data.subjects.size());
    TestResult res;
    std::size_t at_risk = 0, at_risk_c = 0;
    for (const auto& s : data.subjects) {
        const bool ctrl = s.arm == Arm::control;
        obs.push_back({s.time, ctrl, s.event});
        ++at_risk;
        at_risk_c += ctrl ? 1 : 0;
        if (s.event) (ctrl ? res.events_control : res.events_experimental) += 1;
    }
    if (at_risk_c == 0 || at_risk_c == at_risk)
        throw std::invalid_argument("weighted log-rank needs both arms present");
    std::sort(obs.begin(), obs.end(), [](const Obs& a, const Obs& b) { return a.time < b.time; });

    double km = 1.0, score = 0.0, var = 0.0;
    for (std::size_t i = 0; i < obs.size();) {
        const double t = obs[i].time;
        std::size_t d = 0, d_c = 0, leave = 0, leave_c = 0;
        for (; i < obs.size() && obs[i].time == t; ++i) {
            ++leave;
            leave_c += obs[i].control ? 1 : 0;
            if (obs[i].event) {
                ++d;
                d_c += obs[i].control ? 1 : 0;
            }
        }
        if (d > 0) {
            const double n = static_cast<double>(at_risk);
            const double nc = static_cast<double>(at_risk_c);
            const double dd = static_cast<double>(d);
            const double w = weight(km, rho, gamma);
            score += w * (static_cast<double>(d_c) - dd * nc / n);
            if (at_risk > 1) var += w * w * dd * (nc / n) * (1.0 - nc / n) * (n - dd) / (n - 1.0);
            km *= 1.0 - dd / n;
        }
        at_risk -= leave;
        at_risk_c -= leave_c;
    }
    if (!(var > 0.0)) {
        res.degenerate = true;
        return res;
    }
    res.z = score / std::sqrt(var);
    res.p_value = 0.5 * std::erfc(res.z / std::sqrt(2.0));
    return res;
}

TestResult run_test(const TrialDataset& data, const TestSpec& spec) {
    return weighted_logrank(data, spec.rho, spec.gamma);
}

bool is_success(const TestResult& r, const TestSpec& spec) {
    return !r.degenerate && r.z > 0.0 && r.p_value < spec.alpha;
}

}  // namespace dte
