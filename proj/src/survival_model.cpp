#include "dte/survival_model.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace dte {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void require_unit_open(double u) {
    if (!(u > 0.0 && u < 1.0))
        throw std::invalid_argument("uniform draw must lie in (0, 1), got " + std::to_string(u));
}

}  // namespace

WeibullParams::WeibullParams(double rate, double shape) : rate_(rate), shape_(shape) {
    require(std::isfinite(rate) && rate > 0.0, "Weibull rate must be positive and finite");
    require(std::isfinite(shape) && shape > 0.0, "Weibull shape must be positive and finite");
}

double WeibullParams::median() const {
    return std::pow(std::numbers::ln2, 1.0 / shape_) / rate_;
}

DTEModel::DTEModel(WeibullParams control, double delay, WeibullParams experimental)
    : control(control), delay(delay), experimental(experimental) {
    require(std::isfinite(delay) && delay >= 0.0, "delay must be non-negative");
}

DTEModel DTEModel::from_hazard_ratio(const WeibullParams& control, double delay,
                                     double hazard_ratio) {
    const double rate_e = lambda_e_from_hr(control.rate(), control.shape(), hazard_ratio);
    return DTEModel(control, delay, WeibullParams(rate_e, control.shape()));
}

double control_cumulative_hazard(double t, const WeibullParams& p) {
    require(t >= 0.0, "time must be non-negative");
    return std::pow(p.rate() * t, p.shape());
}

double control_survival(double t, const WeibullParams& p) {
    return std::exp(-control_cumulative_hazard(t, p));
}

double control_hazard(double t, const WeibullParams& p) {
    const double g = p.shape();
    if (t < 0.0) throw std::invalid_argument("time must be non-negative");
    if (t == 0.0) {
        if (g < 1.0) throw std::domain_error("Weibull hazard is unbounded at t = 0 for shape < 1");
        return g == 1.0 ? p.rate() : 0.0;
    }
    return g * std::pow(p.rate(), g) * std::pow(t, g - 1.0);
}

double experimental_cumulative_hazard(double t, const DTEModel& m) {
    require(t >= 0.0, "time must be non-negative");
    if (t <= m.delay) return control_cumulative_hazard(t, m.control);
    const double ge = m.experimental.shape();
    return control_cumulative_hazard(m.delay, m.control) +
           std::pow(m.experimental.rate(), ge) * (std::pow(t, ge) - std::pow(m.delay, ge));
}

double experimental_survival(double t, const DTEModel& m) {
    return std::exp(-experimental_cumulative_hazard(t, m));
}

double experimental_hazard(double t, const DTEModel& m) {
    if (t <= m.delay) return control_hazard(t, m.control);
    return control_hazard(t, m.experimental);
}

double hazard_ratio(double t, const DTEModel& m) {
    require(t > 0.0, "hazard ratio requires t > 0");
    if (t <= m.delay) return 1.0;
    const double gc = m.control.shape();
    const double ge = m.experimental.shape();
    if (ge == gc) return std::pow(m.experimental.rate() / m.control.rate(), gc);
    return control_hazard(t, m.experimental) / control_hazard(t, m.control);
}

double lambda_e_from_hr(double rate_c, double shape_c, double hr) {
    require(rate_c > 0.0 && shape_c > 0.0, "control parameters must be positive");
    require(std::isfinite(hr) && hr > 0.0, "hazard ratio must be positive");
    return rate_c * std::pow(hr, 1.0 / shape_c);
}

double sample_control_time(const WeibullParams& p, double u) {
    require_unit_open(u);
    return std::pow(-std::log(u), 1.0 / p.shape()) / p.rate();
}

double sample_experimental_time(const DTEModel& m, double u) {
    require_unit_open(u);
    const double target = -std::log(u);
    const double pre = control_cumulative_hazard(m.delay, m.control);
    if (target <= pre) return std::pow(target, 1.0 / m.control.shape()) / m.control.rate();
    const double ge = m.experimental.shape();
    const double post = (target - pre) / std::pow(m.experimental.rate(), ge);
    return std::pow(post + std::pow(m.delay, ge), 1.0 / ge);
}

}  // namespace dte
