#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dte/dte_fit.hpp"
#include "dte/service/config.hpp"

namespace dte::service {

/// (iterations done, iterations total, running estimate for the current point)
using ProgressFn = std::function<void(std::size_t, std::size_t, double)>;

std::string utc_timestamp();

// {"schema_version", "probabilities", "quantiles"} -> fitted Gamma and feedback.
json run_prior_fit(const json& config);

struct NamedDataset {
    std::string name;
    SurvivalDataset data;
};

/// Posterior file content: MLE, summary, diagnostics and draws.
json control_fit_results(const std::vector<NamedDataset>& datasets, const McmcConfig& mcmc);

/*
 * Config-driven control fit. Data come either from files
 * ({"csv": [paths]}) or inline text ({"datasets": [{"name", "csv"}]}).
 * Returns the posterior file content; the seed is resolved and echoed.
 */
json run_control_fit(const json& config);

/// Results payload of an assurance, curve or flexible run. Depends only on
/// the config and seed, never on the thread count.
json run_engine(const RunConfig& cfg, RunKind kind, unsigned threads, const ProgressFn& progress = {});

/// Envelope around a results payload.
json make_record(const std::string& kind, const json& config, std::uint64_t seed, bool seed_generated,
                 const std::string& started_at, const std::string& finished_at, const json& results);

/// Parse, run and wrap in one step.
json execute(const json& config, RunKind kind, unsigned threads, const ProgressFn& progress = {});

// `n_c,n_e,E,estimate,mc_se,N` rows from an engine results payload.
std::string curve_csv(const json& results);

struct DteFitRequest {
    double delay;
    FitMethod method = FitMethod::A;
    FreeShapeEstimator estimator = FreeShapeEstimator::least_squares;
    // Optional paired power comparison of both methods.
    std::vector<DesignPoint> compare_grid;
    TestSpec test = TestSpec::log_rank();
    std::size_t iterations = 1000;
    std::uint64_t seed = 1;
};

json run_fit_dte(const SurvivalDataset& data, const DteFitRequest& req, unsigned threads);

const char* kind_name(RunKind kind);

}  // namespace dte::service
