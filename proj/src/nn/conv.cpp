#include "cnncausal/nn/conv.hpp"

#include "cnncausal/errors.hpp"

#include <algorithm>

namespace cnncausal::nn {

StructuredBias StructuredBias::zeros(std::size_t span) {
    StructuredBias b;
    b.head.assign(span, 0.0);
    b.tail.assign(span, 0.0);
    return b;
}

std::vector<double> StructuredBias::materialize(std::size_t layer_size) const {
    const std::size_t s = head.size();
    if (tail.size() != s) throw StructuralError("structured bias: head and tail lengths differ");
    if (layer_size < 2 * s)
        throw StructuralError("structured bias: layer size " + std::to_string(layer_size) +
                              " is smaller than 2S = " + std::to_string(2 * s));
    std::vector<double> out(layer_size, middle);
    std::copy(head.begin(), head.end(), out.begin());
    std::copy(tail.begin(), tail.end(), out.end() - static_cast<std::ptrdiff_t>(s));
    return out;
}

Matrix toeplitz_matrix(const FilterMask& mask, std::size_t input_length) {
    if (mask.taps.empty()) throw StructuralError("filter mask has no taps");
    const std::size_t s = mask.span();
    Matrix w = Matrix::Zero(static_cast<Eigen::Index>(input_length + s),
                            static_cast<Eigen::Index>(input_length));
    for (std::size_t j = 0; j < input_length; ++j)
        for (std::size_t k = 0; k <= s; ++k)
            w(static_cast<Eigen::Index>(j + k), static_cast<Eigen::Index>(j)) = mask.taps[k];
    return w;
}

std::vector<double> conv_layer_forward(std::span<const double> h, const FilterMask& mask,
                                       std::span<const double> bias) {
    if (mask.taps.empty()) throw StructuralError("filter mask has no taps");
    const std::size_t s = mask.span();
    const std::size_t out_len = h.size() + s;
    if (bias.size() != out_len)
        throw StructuralError("conv layer: bias length " + std::to_string(bias.size()) +
                              " != input length + S = " + std::to_string(out_len));
    std::vector<double> out(out_len);
    for (std::size_t i = 0; i < out_len; ++i) {
        const std::size_t k_lo = i >= h.size() ? i - h.size() + 1 : 0;
        const std::size_t k_hi = std::min(s, i);
        double z = 0.0;
        for (std::size_t k = k_lo; k <= k_hi; ++k) z += mask.taps[k] * h[i - k];
        out[i] = std::max(0.0, z - bias[i]);
    }
    return out;
}

std::vector<double> conv_layer_forward(std::span<const double> h, const FilterMask& mask,
                                       const StructuredBias& bias) {
    if (bias.span() != mask.span())
        throw StructuralError("conv layer: bias span does not match the filter mask");
    const auto full = bias.materialize(h.size() + mask.span());
    return conv_layer_forward(h, mask, std::span<const double>(full));
}

}  // namespace cnncausal::nn
