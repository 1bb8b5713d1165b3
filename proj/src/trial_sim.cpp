#include "dte/trial_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace dte {

RecruitmentModel::RecruitmentModel(Variant v) : model_(std::move(v)) {
    if (const auto* u = std::get_if<UniformRecruitment>(&model_)) {
        if (!(u->duration > 0.0)) throw std::invalid_argument("recruitment duration must be > 0");
    } else if (const auto* p = std::get_if<PowerRecruitment>(&model_)) {
        if (!(p->period > 0.0)) throw std::invalid_argument("recruitment period must be > 0");
        if (!(p->exponent > 0.0)) throw std::invalid_argument("recruitment exponent must be > 0");
    } else {
        const auto& pw = std::get<PiecewiseRecruitment>(model_);
        if (pw.rates.empty() || pw.breakpoints.size() != pw.rates.size() + 1)
            throw std::invalid_argument("piecewise recruitment needs one more breakpoint than rates");
        if (pw.breakpoints.front() != 0.0)
            throw std::invalid_argument("piecewise recruitment breakpoints must start at 0");
        double total = 0.0;
        cumulative_.push_back(0.0);
        for (std::size_t i = 0; i < pw.rates.size(); ++i) {
            const double width = pw.breakpoints[i + 1] - pw.breakpoints[i];
            if (!(width > 0.0)) throw std::invalid_argument("breakpoints must be strictly increasing");
            if (!(pw.rates[i] >= 0.0)) throw std::invalid_argument("recruitment rates must be >= 0");
            total += pw.rates[i] * width;
            cumulative_.push_back(total);
        }
        if (!(total > 0.0)) throw std::invalid_argument("at least one recruitment rate must be > 0");
        for (double& c : cumulative_) c /= total;
    }
}

double RecruitmentModel::quantile(double u) const {
    if (const auto* uni = std::get_if<UniformRecruitment>(&model_)) return uni->duration * u;
    if (const auto* p = std::get_if<PowerRecruitment>(&model_))
        return p->period * std::pow(u, 1.0 / p->exponent);
    const auto& pw = std::get<PiecewiseRecruitment>(model_);
    // First segment whose cumulative mass reaches u; zero-rate segments are skipped.
    const auto it = std::lower_bound(cumulative_.begin() + 1, cumulative_.end(), u);
    const auto seg = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        it - cumulative_.begin() - 1, static_cast<std::ptrdiff_t>(pw.rates.size()) - 1));
    const double mass = cumulative_[seg + 1] - cumulative_[seg];
    const double frac = mass > 0.0 ? (u - cumulative_[seg]) / mass : 0.0;
    return pw.breakpoints[seg] + frac * (pw.breakpoints[seg + 1] - pw.breakpoints[seg]);
}

double RecruitmentModel::max_time() const {
    if (const auto* uni = std::get_if<UniformRecruitment>(&model_)) return uni->duration;
    if (const auto* p = std::get_if<PowerRecruitment>(&model_)) return p->period;
    return std::get<PiecewiseRecruitment>(model_).breakpoints.back();
}

std::vector<double> sample_recruitment(const RecruitmentModel& model, std::size_t n,
                                       RandomStream& rng) {
    if (n == 0) throw std::invalid_argument("need at least one subject");
    std::vector<double> out(n);
    for (auto& r : out) r = model.quantile(rng.uniform());
    return out;
}

TrialDesign::TrialDesign(std::size_t n_control, std::size_t n_experimental, std::size_t events,
                         RecruitmentModel recruitment)
    : n_control(n_control),
      n_experimental(n_experimental),
      events(events),
      recruitment(std::move(recruitment)) {
    if (n_control < 1 || n_experimental < 1) throw std::invalid_argument("each arm needs >= 1 subject");
    if (events < 1 || events > n_control + n_experimental)
        throw std::invalid_argument("target events must lie in [1, n_c + n_e]");
}

std::size_t TrialDataset::events() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(subjects.begin(), subjects.end(), [](const auto& s) { return s.event; }));
}

SurvivalDataset TrialDataset::to_survival_dataset() const {
    std::vector<SurvivalRecord> out;
    out.reserve(subjects.size());
    for (const auto& s : subjects) {
        if (s.time <= 0.0) continue;   // zero follow-up carries no information
        out.push_back({s.time, s.event, "", s.arm});
    }
    return SurvivalDataset(std::move(out));
}

TrialDataset build_analysis_set(const std::vector<Arm>& arms, const std::vector<double>& recruit,
                                const std::vector<double>& survival, std::size_t events) {
    const std::size_t n = arms.size();
    if (recruit.size() != n || survival.size() != n)
        throw std::invalid_argument("arms, recruitment and survival must have equal length");
    if (events < 1 || events > n) throw std::invalid_argument("target events must lie in [1, n]");

    std::vector<double> pseudo(n);
    for (std::size_t j = 0; j < n; ++j) pseudo[j] = recruit[j] + survival[j];
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto before = [&](std::size_t a, std::size_t b) {
        return pseudo[a] < pseudo[b] || (pseudo[a] == pseudo[b] && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(events - 1),
                     order.end(), before);
    const double cutoff = pseudo[order[events - 1]];

    std::vector<char> is_event(n, 0);
    for (std::size_t k = 0; k < events; ++k) is_event[order[k]] = 1;

    TrialDataset out;
    out.cutoff = cutoff;
    out.subjects.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
        if (recruit[j] > cutoff) continue;
        if (is_event[j])
            out.subjects.push_back({arms[j], recruit[j], survival[j], true});
        else
            out.subjects.push_back({arms[j], recruit[j], cutoff - recruit[j], false});
    }
    return out;
}

TrialDataset simulate_trial(const TrialDesign& design, const DTEModel& model, RandomStream& rng) {
    const std::size_t n = design.total();
    std::vector<Arm> arms(n, Arm::control);
    std::vector<double> survival(n);
    for (std::size_t j = 0; j < design.n_control; ++j)
        survival[j] = sample_control_time(model.control, rng.uniform());
    for (std::size_t j = design.n_control; j < n; ++j) {
        arms[j] = Arm::experimental;
        survival[j] = sample_experimental_time(model, rng.uniform());
    }
    const auto recruit = sample_recruitment(design.recruitment, n, rng);
    return build_analysis_set(arms, recruit, survival, design.events);
}

void write_trial_csv(std::ostream& out, const TrialDataset& data) {
    out << "arm,recruit_time,time,event\n";
    const auto old = out.precision(17);
    for (const auto& s : data.subjects)
        out << (s.arm == Arm::control ? "control" : "experimental") << ',' << s.recruit_time << ','
            << s.time << ',' << (s.event ? 1 : 0) << '\n';
    out.precision(old);
}

}  // namespace dte
