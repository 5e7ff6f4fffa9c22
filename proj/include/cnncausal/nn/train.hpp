#pragma once

#include "cnncausal/dataset.hpp"
#include "cnncausal/nn/network.hpp"
#include "cnncausal/nn/spec.hpp"
#include "cnncausal/numeric.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace cnncausal::nn {

enum class LossKind { Squared, Logistic };
enum class NuisanceKind { Outcome, Propensity };

/// squared: (prediction − target)²; logistic: ln(1 + e^{prediction}) − target·prediction,
/// with `prediction` a logit and `target` in {0,1} (DomainError otherwise).
double loss_value(LossKind kind, double prediction, double target);
/// ∂loss/∂prediction.
double loss_derivative(LossKind kind, double prediction, double target);

struct AdamConfig {
    double step = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}
    void step(std::span<double> params, std::span<const double> grad);

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    std::uint64_t t_ = 0;
};

struct TrainConfig {
    // Defaults to squared for outcome models and logistic for propensity models.
    std::optional<LossKind> loss;
    AdamConfig adam;
    std::size_t batch_size = 64;
    int epochs = 200;
    // Stop once the epoch loss has not improved by min_improvement for `patience` epochs.
    int patience = 10;
    double min_improvement = 1e-6;
    // Outcome clipping bound M'. Unset: 2·max|y_i| over the training rows.
    std::optional<double> m_prime;
    // Propensity predictions are trimmed to [trim, 1 − trim].
    double trim = 0.01;
    std::uint64_t seed = 0;
    // Train outcome networks on (y − mean)/sd; predictions are mapped back.
    bool standardize_target = true;

    void validate() const;  // throws ConfigError
};

struct TrainingTrace {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int epochs_run = 0;
    bool reverted_to_initial = false;
    std::vector<double> epoch_losses;
};

/// Trained nuisance predictor. Immutable after training; predict() is const
/// and safe to call concurrently.
///   outcome:    |predict(x)| <= M'
///   propensity: predict(x) in [trim, 1 − trim]
class NuisanceModel {
public:
    NuisanceKind kind() const noexcept { return kind_; }
    double m_prime() const noexcept { return m_prime_; }
    double trim() const noexcept { return trim_; }
    const Network& network() const noexcept { return *net_; }
    const TrainingTrace& trace() const noexcept { return trace_; }
    std::size_t input_dim() const noexcept { return scale_min_.size(); }

    double predict(std::span<const double> x) const;
    Vector predict(const Matrix& x) const;
    // Network output before the clamp / logistic link (scaled target units for outcomes).
    Vector raw_output(const Matrix& x) const;

    // Per-column min-max map to [−1, 1] learnt on the training rows.
    std::vector<double> scale_row(std::span<const double> x) const;

private:
    friend NuisanceModel train_network(const Matrix&, const Vector&, NuisanceKind, const ArchSpec&,
                                       const TrainConfig&, Rng&);
    friend void save_model(const NuisanceModel&, const std::string&);
    friend NuisanceModel load_model(const std::string&);

    double finish(double raw) const;

    NuisanceKind kind_ = NuisanceKind::Outcome;
    std::shared_ptr<const Network> net_;
    std::vector<double> scale_min_, scale_max_;
    double target_mean_ = 0.0, target_scale_ = 1.0;
    double m_prime_ = 0.0;
    double trim_ = 0.01;
    TrainingTrace trace_;
};

/// Empirical risk minimization over the network class with the output
/// clamped to [−M', M'] (outcome) or passed through the logistic link
/// (propensity). The returned parameters never have a higher full training
/// loss than the initialization. Throws DataError on an empty training set
/// and DivergenceError (with the epoch) when the loss stops being finite.
NuisanceModel train_network(const Matrix& x, const Vector& target, NuisanceKind kind,
                            const ArchSpec& arch, const TrainConfig& cfg, Rng& rng);

/// Dataset-level entry point. Outcome models are fitted on the rows with
/// t_i == arm (arm 0 gives μ̂0, which is what ACET needs); propensity models
/// use every row with t as the target.
NuisanceModel train_nuisance(const Dataset& data, NuisanceKind kind, int arm,
                             const ArchSpec& arch, const TrainConfig& cfg, Rng& rng);

/// Checkpoint I/O: versioned text, every double written as a hex float so
/// the round trip is exact. Throws IoError / DataError.
void save_model(const NuisanceModel& model, const std::string& path);
NuisanceModel load_model(const std::string& path);

}  // namespace cnncausal::nn
