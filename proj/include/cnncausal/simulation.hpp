#pragma once

#include "cnncausal/dataset.hpp"
#include "cnncausal/estimators.hpp"
#include "cnncausal/numeric.hpp"
#include "cnncausal/pipeline.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cnncausal::sim {

/// One draw from a simulation design together with everything the observed
/// data hides: potential outcomes, the true propensity and the error-free
/// outcome regressions.
struct SimulatedSample {
    Dataset data;  // y = t·y1 + (1 − t)·y0
    Vector y0, y1;
    Vector p_true;
    Vector mu0_true, mu1_true;
};

/// Ten independent normal columns; column j has mean kMeans[j] and standard
/// deviation kSds[j].
inline constexpr double kMeans[10] = {100, 102, 105, 107, 109, 110, 112, 115, 117, 119};
inline constexpr double kSds[10] = {20, 15, 13, 11, 8, 20, 15, 13, 11, 8};

Matrix gen_covariates(Rng& rng, std::size_t n);

/// (x2−x1)² + (x4−x3)³ + (x6−x5)² + (x8−x7)³ + (x10−x9)² on one row.
double setting1_signal(const double* x);

/// Step rules of the second design.
double step_rise(double x, double y, double z, double w);      // 10 if every ratio > 1.15
double step_flat(double x, double y, double z, double w);      // 5 if every ratio < 1.05
double step_zigzag(double x, double y, double z, double w);    // 3 if (y−1.1x)(z−1.1y)(w−1.1z) < 0
double setting2_signal(const double* x);  // rise(x1..x4) + flat(x4..x7) + zigzag(x6..x9)

/// Setting 1: y0 = 1 + 0.001·D + e0, y1 = 2 − 0.001·D + e1,
/// P(T=1|X) = 1/(1 + exp(5e-6·D)); e0, e1 iid N(0,1).
SimulatedSample dgp_setting1(Rng& rng, std::size_t n);
/// Setting 2: y0 = 1 + G + e0, y1 = 2 − G + e1, P(T=1|X) = 1/(1 + exp(0.05·x5 − 0.1·G)).
SimulatedSample dgp_setting2(Rng& rng, std::size_t n);
SimulatedSample simulate(int setting, Rng& rng, std::size_t n);

struct TrueEffect {
    double value = 0.0;
    double std_error = 0.0;  // Monte Carlo standard error of `value`
};

/// Brute-force integral of μ1 − μ0 (the error terms have mean zero and are
/// left out). ACET weights each draw by p_true(x) and divides by the summed
/// weights. Results are cached per (setting, estimand, mc_size, seed).
TrueEffect true_effect_oracle(int setting, Estimand estimand, std::size_t mc_size,
                              std::uint64_t seed);

/// Estimator applied to a simulated sample; may use the hidden truth.
using CustomEstimator =
    std::function<EstimateReport(const SimulatedSample&, const PipelineSettings&, Rng&)>;

struct NamedEstimator {
    std::string name;
    std::optional<EstimatorKind> kind;  // set for the built-in estimators
    CustomEstimator custom;             // used when kind is empty
};

NamedEstimator builtin(EstimatorKind kind);
/// AIPW with the true μ0, μ1 and p plugged in.
NamedEstimator oracle_aipw();

struct McConfig {
    int setting = 1;
    std::size_t n = 1000;
    std::size_t reps = 100;
    std::vector<NamedEstimator> estimators;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::size_t oracle_mc_size = 10'000'000;
    std::uint64_t oracle_seed = 20240101;
    // Fraction of failed replications above which the run is abandoned.
    double max_failure_rate = 0.05;
    PipelineSettings pipeline;

    void validate() const;  // throws ConfigError
};

struct EstimatorSummary {
    std::string name;
    double bias = 0.0;
    double coverage = 0.0;
    double mc_sd = 0.0;   // sample sd of the estimates; NaN when fewer than two
    double est_sd = 0.0;  // mean of the per-replication standard errors
    double mse = 0.0;     // bias² + mc_sd² (mc_sd taken as 0 when undefined)
    std::size_t completed = 0;
    std::size_t failed = 0;
    std::vector<double> estimates;  // NaN for failed replications
    std::vector<double> std_errors;
    std::vector<std::string> failures;
};

struct MonteCarloReport {
    McConfig config;
    TrueEffect truth;
    std::vector<EstimatorSummary> estimators;
};

/// Replication r draws its sample from substream (seed, {r, 0}) and
/// estimator k from (seed, {r, 1, k}), so results do not depend on the
/// thread count or on which other replications run. Aggregation happens
/// afterwards in replication order. Replications that throw are recorded;
/// more than max_failure_rate of them for one estimator raises
/// ConvergenceError.
MonteCarloReport monte_carlo_run(const McConfig& cfg);

/// Runs the given replication indices only (used to check substream isolation).
MonteCarloReport monte_carlo_run(const McConfig& cfg, const std::vector<std::size_t>& replications);

}  // namespace cnncausal::sim
