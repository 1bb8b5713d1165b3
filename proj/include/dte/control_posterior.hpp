#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dte/survival_model.hpp"

namespace dte {

enum class Arm { control, experimental };

struct SurvivalRecord {
    double time;   // months, > 0
    bool event;    // false = right-censored
    std::string source;
    std::optional<Arm> arm;
};

class SurvivalDataset {
   public:
    SurvivalDataset() = default;
    explicit SurvivalDataset(std::vector<SurvivalRecord> records);

    const std::vector<SurvivalRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    std::size_t events() const noexcept;

    SurvivalDataset arm(Arm a) const;

   private:
    std::vector<SurvivalRecord> records_;
};

class CsvError : public std::runtime_error {
   public:
    CsvError(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line), detail_(msg) {}
    CsvError(const std::string& file, std::size_t line, const std::string& msg)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg), line_(line), detail_(msg) {}
    std::size_t line() const noexcept { return line_; }
    const std::string& detail() const noexcept { return detail_; }

   private:
    std::size_t line_;
    std::string detail_;
};

// Header `time,event[,source][,arm]` in any column order. Records must have
// time > 0 and event in {0, 1}. `default_source` labels rows without a
// source column.
SurvivalDataset read_ipd_csv(std::istream& in, const std::string& default_source = "");
SurvivalDataset read_ipd_csv_file(const std::string& path);

// Writes `time,event,source,arm` (arm column only if every record has one).
// Records with zero follow-up are skipped.
void write_ipd_csv(std::ostream& out, const SurvivalDataset& data);

SurvivalDataset pool(const std::vector<SurvivalDataset>& datasets);

double weibull_loglik(const WeibullParams& p, const SurvivalDataset& d);

// Gradient of the log-likelihood with respect to (log rate, log shape).
std::array<double, 2> weibull_loglik_gradient(const WeibullParams& p, const SurvivalDataset& d);

struct WeibullFit {
    WeibullParams params;
    double loglik;
    // Standard errors of (log rate, log shape) from the observed information.
    std::array<double, 2> log_se;
    bool converged;
};

WeibullFit weibull_mle(const SurvivalDataset& d);

struct McmcConfig {
    int iterations = 20000;
    int burn_in = 5000;
    int thin = 4;
    int pilot_rounds = 10;
    int pilot_length = 500;
    double target_acceptance = 0.3;
    // Fixed proposal scales on (log rate, log shape); empty = tuned by the pilot.
    std::optional<std::array<double, 2>> proposal_scale;
    double ess_floor = 400.0;
    std::uint64_t seed = 1;
};

struct PosteriorSample {
    std::vector<WeibullParams> draws;
    double acceptance_rate = 0.0;
    std::array<double, 2> ess{};      // (rate, shape)
    bool low_ess = false;
    bool acceptance_out_of_range = false;

    std::array<double, 2> mean() const;
    std::array<double, 2> sd() const;
};

/*
 * Random-walk Metropolis on (log rate, log shape). The prior is flat on the
 * log scale (density proportional to 1 / (rate * shape) on the natural
 * scale), so the target on the sampling scale is the likelihood alone.
 */
PosteriorSample mcmc_weibull_posterior(const SurvivalDataset& d, const McmcConfig& cfg);

// Initial-positive-sequence effective sample size (Geyer).
double effective_sample_size(const std::vector<double>& chain);

struct KaplanMeierStep {
    double time;
    double survival;   // S(time), right-continuous
    std::size_t at_risk;
    std::size_t events;
};

// Product-limit estimate at each distinct event time; ties grouped.
std::vector<KaplanMeierStep> kaplan_meier(const SurvivalDataset& d);
std::optional<double> kaplan_meier_median(const SurvivalDataset& d);

}  // namespace dte
