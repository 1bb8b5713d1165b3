#pragma once

#include <iosfwd>
#include <variant>
#include <vector>

#include "dte/control_posterior.hpp"
#include "dte/random.hpp"
#include "dte/survival_model.hpp"

namespace dte {

struct UniformRecruitment {
    double duration;
};

// Rate rates[i] applies on [breakpoints[i], breakpoints[i+1]); breakpoints has
// one more entry than rates and starts at 0.
struct PiecewiseRecruitment {
    std::vector<double> breakpoints;
    std::vector<double> rates;
};

// P(R <= t) = (t / period)^exponent on [0, period].
struct PowerRecruitment {
    double period;
    double exponent;
};

class RecruitmentModel {
   public:
    using Variant = std::variant<UniformRecruitment, PiecewiseRecruitment, PowerRecruitment>;

    RecruitmentModel(Variant v);
    static RecruitmentModel uniform(double duration) { return {UniformRecruitment{duration}}; }

    const Variant& model() const noexcept { return model_; }

    // Inverse CDF of the entry-time distribution.
    double quantile(double u) const;
    double max_time() const;

   private:
    Variant model_;
    std::vector<double> cumulative_;   // piecewise only: normalized CDF at breakpoints
};

std::vector<double> sample_recruitment(const RecruitmentModel& model, std::size_t n,
                                       RandomStream& rng);

struct TrialDesign {
    std::size_t n_control;
    std::size_t n_experimental;
    std::size_t events;
    RecruitmentModel recruitment = RecruitmentModel::uniform(12.0);

    TrialDesign(std::size_t n_control, std::size_t n_experimental, std::size_t events,
                RecruitmentModel recruitment = RecruitmentModel::uniform(12.0));

    std::size_t total() const noexcept { return n_control + n_experimental; }
};

struct Subject {
    Arm arm;
    double recruit_time;
    double time;   // follow-up since own recruitment
    bool event;
};

struct TrialDataset {
    std::vector<Subject> subjects;
    double cutoff;   // calendar time of the E-th pseudo event

    std::size_t events() const noexcept;
    SurvivalDataset to_survival_dataset() const;
};

/*
 * Event-driven analysis set from per-subject arms, recruitment times and
 * survival times. Pseudo event time = recruitment + survival; the cutoff is
 * the E-th smallest pseudo event time, ties ordered by subject index.
 * Subjects recruited after the cutoff are dropped; the first E in that
 * order are events and everyone else still present is censored at
 * cutoff - recruitment (possibly zero).
 */
TrialDataset build_analysis_set(const std::vector<Arm>& arms, const std::vector<double>& recruit,
                                const std::vector<double>& survival, std::size_t events);

TrialDataset simulate_trial(const TrialDesign& design, const DTEModel& model, RandomStream& rng);

// `arm,recruit_time,time,event`
void write_trial_csv(std::ostream& out, const TrialDataset& data);

}  // namespace dte
