#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace cnncausal::nn {

enum class CnnVariant {
    // E parallel single-channel chains of full convolutions with structured
    // biases; layer l has length d + S·l; linear readout Σ_e c_e' h_e^L.
    Theoretical,
    // Multi-channel valid convolutions over the series block (each output
    // channel sums one kernel per input channel), a dense branch for static
    // covariates, then flatten/concatenate and a dense head.
    Practical,
};

struct CnnSpec {
    CnnVariant variant = CnnVariant::Practical;
    std::size_t span = 2;  // S: filter has S+1 taps

    // Theoretical variant.
    std::size_t input_length = 0;  // d
    std::size_t depth = 1;         // L
    std::size_t channels = 1;      // E
    bool require_depth_bound = false;   // when set, validate() requires L >= 2d/(S-1)

    // Practical variant. Input vectors hold series_count series of
    // series_length values each (series-major), then static_count statics.
    std::size_t series_count = 1;
    std::size_t series_length = 0;
    std::size_t static_count = 0;
    std::vector<std::size_t> channels_per_layer{128, 16};
    std::vector<std::size_t> static_branch_widths;
    std::vector<std::size_t> head_widths;

    static CnnSpec theoretical(std::size_t d, std::size_t span, std::size_t depth,
                               std::size_t channels);
    static CnnSpec practical(std::size_t series_count, std::size_t series_length,
                             std::size_t static_count, std::vector<std::size_t> channels_per_layer,
                             std::size_t span = 2);

    // Network input dimension.
    std::size_t input_dim() const;
    // d_l = d + S·l (theoretical variant).
    std::size_t layer_length(std::size_t l) const { return input_length + span * l; }

    void validate() const;  // throws ConfigError
};

/// Fully connected ReLU network with two hidden layers.
struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden{128, 80};

    void validate() const;
};

using ArchSpec = std::variant<CnnSpec, MlpSpec>;

std::size_t input_dim(const ArchSpec& arch);
std::string describe(const ArchSpec& arch);

/// Parameter count of the theoretical CNN with weights shared along the
/// band counted once per use:
///   Q = E(d(1+s)(L−1) + s(1+s)L(L−1)/2 + (s+3)(d+sL)).
/// Per channel this is (s+1) tap slots for every output position of every
/// layer, plus the d_L entries of the last-layer bias and the d_L readout
/// weights. The structured hidden-layer biases are not part of the count.
/// Throws ConfigError for the practical variant.
std::size_t parameter_count(const CnnSpec& spec);

struct RateSchedule {
    std::size_t channels;  // E
    std::size_t depth;     // L
};

/// E = max(1, round(c_E · n^{d/(2d+4)})), L = max(1, round(c_L · n^{1/(4d+8)} · ln²n)).
RateSchedule rate_schedule(std::size_t n, std::size_t d, double c_e = 1.0, double c_l = 1.0);

}  // namespace cnncausal::nn
