#pragma once

#include "cnncausal/dataset.hpp"

#include <span>
#include <vector>

namespace cnncausal::nn {

/// Taps (w_0, ..., w_S) of one convolution filter.
struct FilterMask {
    std::vector<double> taps;

    std::size_t span() const noexcept { return taps.empty() ? 0 : taps.size() - 1; }
};

/// Bias vector of a hidden layer of length d_l whose middle d_l − 2S entries
/// share one value: (head_1..head_S, middle, ..., middle, tail_1..tail_S).
struct StructuredBias {
    std::vector<double> head;
    double middle = 0.0;
    std::vector<double> tail;

    static StructuredBias zeros(std::size_t span);
    std::size_t span() const noexcept { return head.size(); }

    // Full bias vector for a layer of size d_l. Throws StructuralError if d_l < 2S.
    std::vector<double> materialize(std::size_t layer_size) const;
};

/// The (d_in + S) x d_in banded Toeplitz matrix of the full convolution with `mask`:
/// entry (i, j) is w_{i-j} for 0 <= i-j <= S and zero elsewhere.
Matrix toeplitz_matrix(const FilterMask& mask, std::size_t input_length);

/// σ(W h − b) computed by sliding the mask over h, where W is toeplitz_matrix(mask, |h|)
/// and σ is the ReLU. `bias` has length |h| + S.
std::vector<double> conv_layer_forward(std::span<const double> h, const FilterMask& mask,
                                       std::span<const double> bias);
std::vector<double> conv_layer_forward(std::span<const double> h, const FilterMask& mask,
                                       const StructuredBias& bias);

}  // namespace cnncausal::nn
