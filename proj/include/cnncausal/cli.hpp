#pragma once

#include "cnncausal/estimators.hpp"
#include "cnncausal/io.hpp"
#include "cnncausal/pipeline.hpp"
#include "cnncausal/simulation.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cnncausal {

enum class Command { Simulate, Estimate };

/// Fully resolved settings of one CLI invocation. Built from an optional JSON
/// config file overlaid with the command-line flags; the same snake_case keys
/// are used in both places.
struct RunConfig {
    Command command = Command::Simulate;

    Estimand estimand = Estimand::ACET;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    std::string out;
    ReportFormat format = ReportFormat::Json;
    std::size_t threads = 1;

    // Nuisance models.
    double trim = 0.01;
    std::optional<double> m_prime;
    int epochs = 200;
    std::size_t batch_size = 64;
    int patience = 10;
    double learning_rate = 1e-3;
    std::size_t span = 2;
    std::vector<std::size_t> outcome_channels{128, 16};
    std::vector<std::size_t> propensity_channels{32, 8};
    std::vector<std::size_t> outcome_hidden{128, 80};
    std::vector<std::size_t> propensity_hidden{32, 8};
    std::vector<std::size_t> static_branch;
    std::vector<std::size_t> head;
    LambdaRule lambda_rule = LambdaRule::PlugIn;

    // simulate
    int setting = 1;
    std::size_t n = 1000;
    std::size_t reps = 100;
    std::vector<std::string> estimators{"DRcnn", "DRmlp", "DRss", "DRds", "ORds", "naive"};
    std::size_t oracle_mc_size = 10'000'000;
    std::uint64_t oracle_seed = 20240101;

    // estimate
    std::string data;
    std::string outcome;
    std::string treat;
    std::string method = "DRcnn";
    std::vector<std::string> series;  // "name=col1,col2,..."
    std::vector<std::string> statics;

    /// Keys accepted for a command; anything else is a ConfigError.
    static std::vector<std::string> keys(Command c);
    static RunConfig from_json(Command c, const nlohmann::json& j);
    /// Settings that determine the result (no output path or format).
    nlohmann::json to_json() const;
    void validate() const;  // throws ConfigError

    PipelineSettings pipeline() const;
    std::optional<SeriesLayout> layout() const;
    sim::McConfig monte_carlo() const;
};

/// Parses "name=c1,c2,..." into a series.
SeriesLayout::Series parse_series(const std::string& spec);

/// Exit codes: 0 success, 2 usage or configuration error, 3 data or file
/// error, 4 numerical failure (divergence, non-convergence).
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cnncausal
