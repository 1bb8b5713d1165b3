#pragma once

#include <stdexcept>

namespace dte {

/*
 * Weibull distribution in rate form:
 *
 *     S(t) = exp{-(rate * t)^shape},   h(t) = shape * rate^shape * t^(shape - 1).
 *
 * The usual "scale" parameterization (R's rweibull, survreg's exp(intercept))
 * has scale = 1 / rate. Times are in months throughout.
 */
class WeibullParams {
   public:
    WeibullParams(double rate, double shape);

    double rate() const noexcept { return rate_; }
    double shape() const noexcept { return shape_; }
    double scale() const noexcept { return 1.0 / rate_; }
    double median() const;

    static WeibullParams from_scale(double scale, double shape) {
        return WeibullParams(1.0 / scale, shape);
    }

    friend bool operator==(const WeibullParams&, const WeibullParams&) = default;

   private:
    double rate_;
    double shape_;
};

/*
 * Delayed treatment effect model: the experimental arm shares the control
 * hazard up to `delay`, then follows its own Weibull hazard.
 */
struct DTEModel {
    WeibullParams control;
    double delay;
    WeibullParams experimental;

    DTEModel(WeibullParams control, double delay, WeibullParams experimental);

    // Identical arms: no separation at any time.
    static DTEModel null_effect(const WeibullParams& control) {
        return DTEModel(control, 0.0, control);
    }

    // Piecewise-constant hazard ratio form: shape shared, rate from the ratio.
    static DTEModel from_hazard_ratio(const WeibullParams& control, double delay,
                                      double hazard_ratio);
};

double control_survival(double t, const WeibullParams& p);
double control_hazard(double t, const WeibullParams& p);
double control_cumulative_hazard(double t, const WeibullParams& p);

double experimental_survival(double t, const DTEModel& m);
double experimental_hazard(double t, const DTEModel& m);
double experimental_cumulative_hazard(double t, const DTEModel& m);

double hazard_ratio(double t, const DTEModel& m);

// rate_e such that (rate_e / rate_c)^shape_c == hr.
double lambda_e_from_hr(double rate_c, double shape_c, double hr);

// Inverse-survival sampling; `u` must lie in (0, 1).
double sample_control_time(const WeibullParams& p, double u);
double sample_experimental_time(const DTEModel& m, double u);

}  // namespace dte
