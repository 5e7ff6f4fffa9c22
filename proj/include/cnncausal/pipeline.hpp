#pragma once

// Named estimators: nuisance fitting (networks or post-lasso) followed by the
// AIPW / OR / naive estimate. Shared by the Monte Carlo runner and the CLI.

#include "cnncausal/dataset.hpp"
#include "cnncausal/estimators.hpp"
#include "cnncausal/lasso.hpp"
#include "cnncausal/nn/spec.hpp"
#include "cnncausal/nn/train.hpp"
#include "cnncausal/numeric.hpp"

#include <string>
#include <vector>

namespace cnncausal {

enum class EstimatorKind {
    DRcnn,  // AIPW, CNN nuisances
    DRmlp,  // AIPW, MLP nuisances
    DRss,   // AIPW, post-lasso single selection
    DRds,   // AIPW, post-lasso double selection
    ORds,   // outcome regression, post-lasso double selection
    Naive,  // difference in means
};

std::string to_string(EstimatorKind k);
// Case-insensitive; throws ConfigError on an unknown name.
EstimatorKind parse_estimator(const std::string& s);

struct NnSettings {
    nn::TrainConfig train;
    std::size_t span = 2;
    std::vector<std::size_t> outcome_channels{128, 16};
    std::vector<std::size_t> propensity_channels{32, 8};
    std::vector<std::size_t> outcome_hidden{128, 80};
    std::vector<std::size_t> propensity_hidden{32, 8};
    std::vector<std::size_t> static_branch;  // dense widths for static covariates
    std::vector<std::size_t> head;           // dense widths after flattening
};

struct PipelineSettings {
    Estimand estimand = Estimand::ACET;
    double alpha = 0.05;
    // Propensity trimming shared by the networks and the post-lasso refit.
    double trim = 0.01;
    NnSettings nn;
    PostLassoConfig lasso;
};

/// Network architectures for the outcome and propensity models. Without a
/// layout every covariate is one point of a single series.
nn::ArchSpec cnn_arch(const Dataset& data, const NnSettings& s, nn::NuisanceKind kind);
nn::ArchSpec mlp_arch(const Dataset& data, const NnSettings& s, nn::NuisanceKind kind);

/// Fits μ̂0 (and μ̂1 for ACE) on the matching arm and p̂ on all rows.
/// Each network gets its own substream of `rng`.
NuisanceFit fit_network_nuisances(const Dataset& data, bool use_cnn, const PipelineSettings& s,
                                  Rng& rng);

EstimateReport run_estimator(EstimatorKind kind, const Dataset& data, const PipelineSettings& s,
                             Rng& rng);

}  // namespace cnncausal
