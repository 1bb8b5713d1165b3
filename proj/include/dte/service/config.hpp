#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dte/assurance.hpp"
#include "dte/control_posterior.hpp"
#include "dte/elicitation.hpp"

namespace dte::service {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// Schema violation at a JSON path such as `$.design.events`.
class ConfigError : public std::runtime_error {
   public:
    ConfigError(std::string path, const std::string& msg)
        : std::runtime_error(path + ": " + msg), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

   private:
    std::string path_;
};

/*
 * Strict view of one JSON object: every field read is recorded, and
 * finish() rejects any field that was never asked for.
 */
class ObjectReader {
   public:
    ObjectReader(const json& j, std::string path);

    bool has(const std::string& key) const;
    const json& at(const std::string& key);
    std::string child(const std::string& key) const { return path_ + "." + key; }
    const std::string& path() const noexcept { return path_; }

    double number(const std::string& key);
    double number(const std::string& key, double fallback);
    double positive(const std::string& key);
    double probability(const std::string& key);
    std::uint64_t count(const std::string& key);   // integer >= 1
    std::uint64_t count(const std::string& key, std::uint64_t fallback);
    std::uint64_t unsigned_integer(const std::string& key);
    bool boolean(const std::string& key, bool fallback);
    std::string string(const std::string& key);
    std::string string(const std::string& key, const std::string& fallback);
    std::vector<double> numbers(const std::string& key);
    ObjectReader object(const std::string& key);

    void finish() const;

   private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

// Reads `schema_version`, which must equal kSchemaVersion.
void check_schema_version(ObjectReader& r);

QuantileJudgements parse_judgements(ObjectReader r);
GammaDist parse_gamma_prior(ObjectReader r);
EffectPrior parse_effect(ObjectReader r);
RecruitmentModel parse_recruitment(ObjectReader r);
DesignPoint parse_design_point(ObjectReader r);
std::vector<DesignPoint> parse_grid(const json& j, const std::string& path);
TestSpec parse_test(ObjectReader r);
McmcConfig parse_mcmc(ObjectReader r);
FlexConfig parse_flex(ObjectReader r);

/// Posterior draws written by fit-control.
std::vector<WeibullParams> read_posterior_file(const std::string& path);

/*
 * The control source is one of
 *   {"fixed": {"rate", "shape"}}
 *   {"posterior_file": path}
 *   {"draws": [[rate, shape], ...]}
 *   {"csv": [paths...], "mcmc": {...}}
 * The CSV form runs the sampler with `seed` as its seed.
 */
ControlPriorSource parse_control(ObjectReader r, std::uint64_t seed);

/// Validated engine run: everything needed for assurance, curve or flexible.
struct RunConfig {
    json raw;                  // config as supplied, with the resolved seed
    std::uint64_t seed;
    bool seed_generated;
    AssuranceConfig engine;
    std::vector<DesignPoint> grid;   // empty = the single design point
    bool common_random_numbers;
    std::optional<FlexConfig> flex;
};

enum class RunKind { assurance, curve, flexible };

/// Throws ConfigError (schema) or CsvError (referenced data files).
RunConfig parse_run_config(const json& j, RunKind kind);

std::uint64_t generate_seed();

/// FNV-1a 64 of the canonical dump, with the seed field removed.
std::string config_hash(const json& config);

}  // namespace dte::service
