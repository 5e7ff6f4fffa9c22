#pragma once

#include "cnncausal/nn/conv.hpp"
#include "cnncausal/nn/spec.hpp"
#include "cnncausal/numeric.hpp"

#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace cnncausal::nn {

/// Activation storage for one forward pass over a mini-batch. Buffers are
/// feature-major with the batch index contiguous ([feature][batch]).
struct Tape {
    std::size_t batch = 0;
    std::vector<std::vector<double>> buffers;
    // Smallest |pre-activation| seen by a ReLU in the last forward pass.
    double kink_margin = std::numeric_limits<double>::infinity();

    std::vector<double>& at(std::size_t i, std::size_t size) {
        if (buffers.size() <= i) buffers.resize(i + 1);
        buffers[i].assign(size, 0.0);
        return buffers[i];
    }
};

/// Scalar-output network with a flat parameter vector. forward() and
/// backward() are const: all per-pass state lives in the Tape, so one
/// trained network can serve concurrent predictions.
class Network {
public:
    explicit Network(std::size_t num_params) : params_(num_params, 0.0) {}
    virtual ~Network() = default;

    virtual std::size_t input_dim() const = 0;
    virtual ArchSpec arch() const = 0;
    virtual std::unique_ptr<Network> clone() const = 0;

    std::size_t num_params() const noexcept { return params_.size(); }
    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }

    // He-uniform hidden weights, LeCun-uniform output weights, zero biases.
    virtual void initialize(Rng& rng) = 0;

    // x is batch x input_dim, row-major; out receives one raw output per row.
    virtual void forward(std::span<const double> x, std::size_t batch, std::span<double> out,
                         Tape& tape) const = 0;

    // Adds Σ_b dout[b] · ∂out[b]/∂θ to grad. `tape` must come from forward() on the same batch.
    virtual void backward(std::span<const double> dout, const Tape& tape,
                          std::span<double> grad) const = 0;

    double evaluate(std::span<const double> x) const;
    std::vector<double> evaluate_batch(std::span<const double> x, std::size_t batch) const;

protected:
    std::vector<double> params_;
};

/// E parallel chains h_e^l = σ(W_e^l h_e^{l-1} − b_e^l) with readout Σ_e c_e' h_e^L.
/// Parameter layout per channel: for l = 1..L the S+1 mask taps followed by
/// the bias (2S+1 structured values for l < L, d_L free values for l = L),
/// then the d_L readout weights.
class TheoryCnn final : public Network {
public:
    explicit TheoryCnn(const CnnSpec& spec);

    std::size_t input_dim() const override { return spec_.input_length; }
    ArchSpec arch() const override { return spec_; }
    std::unique_ptr<Network> clone() const override { return std::make_unique<TheoryCnn>(*this); }
    void initialize(Rng& rng) override;
    void forward(std::span<const double> x, std::size_t batch, std::span<double> out,
                 Tape& tape) const override;
    void backward(std::span<const double> dout, const Tape& tape,
                  std::span<double> grad) const override;

    const CnnSpec& spec() const noexcept { return spec_; }

    // Views into the parameter vector; channel e in [0,E), layer l in [1,L].
    FilterMask mask(std::size_t e, std::size_t l) const;
    std::vector<double> bias(std::size_t e, std::size_t l) const;  // materialized, length d_l
    std::span<const double> readout(std::size_t e) const;

    void set_mask(std::size_t e, std::size_t l, const FilterMask& m);
    void set_structured_bias(std::size_t e, std::size_t l, const StructuredBias& b);
    void set_final_bias(std::size_t e, std::span<const double> b);
    void set_readout(std::size_t e, std::span<const double> c);

private:
    std::size_t bias_size(std::size_t l) const;
    std::size_t mask_offset(std::size_t e, std::size_t l) const;
    std::size_t bias_offset(std::size_t e, std::size_t l) const {
        return mask_offset(e, l) + spec_.span + 1;
    }
    std::size_t readout_offset(std::size_t e) const;
    std::size_t per_channel_ = 0;
    CnnSpec spec_;
};

/// Stack of fully connected layers; every layer but an optional linear last one uses ReLU.
class DenseStack {
public:
    DenseStack() = default;
    DenseStack(std::size_t input, std::vector<std::size_t> widths, bool linear_last,
               std::size_t param_offset, std::size_t tape_offset);

    std::size_t num_params() const noexcept { return num_params_; }
    std::size_t tape_slots() const noexcept { return 2 * widths_.size(); }
    std::size_t output_width() const noexcept { return widths_.empty() ? input_ : widths_.back(); }
    bool empty() const noexcept { return widths_.empty(); }

    void initialize(std::span<double> params, Rng& rng) const;
    // Returns the buffer holding the stack output (the input itself when empty).
    const double* forward(std::span<const double> params, const double* in, Tape& tape) const;
    // dout is the gradient w.r.t. the stack output; din (nullable) accumulates the input gradient.
    void backward(std::span<const double> params, const double* in, const double* dout,
                  const Tape& tape, std::span<double> grad, double* din) const;

private:
    std::size_t input_ = 0;
    std::vector<std::size_t> widths_;
    bool linear_last_ = false;
    std::size_t param_offset_ = 0;
    std::size_t tape_offset_ = 0;
    std::size_t num_params_ = 0;
};

/// Multi-channel CNN: valid convolutions over the series block, a dense
/// branch for statics, then flatten + concatenate into a dense head with a
/// linear scalar output.
class PracticalCnn final : public Network {
public:
    explicit PracticalCnn(const CnnSpec& spec);

    std::size_t input_dim() const override { return spec_.input_dim(); }
    ArchSpec arch() const override { return spec_; }
    std::unique_ptr<Network> clone() const override {
        return std::make_unique<PracticalCnn>(*this);
    }
    void initialize(Rng& rng) override;
    void forward(std::span<const double> x, std::size_t batch, std::span<double> out,
                 Tape& tape) const override;
    void backward(std::span<const double> dout, const Tape& tape,
                  std::span<double> grad) const override;

private:
    struct ConvLayer {
        std::size_t in_channels, out_channels, in_length, out_length;
        std::size_t weight_offset, bias_offset;
    };
    CnnSpec spec_;
    std::vector<ConvLayer> conv_;
    std::size_t flat_width_ = 0;
    DenseStack static_branch_;
    DenseStack head_;
    std::size_t concat_slot_ = 0;
};

/// Two-hidden-layer ReLU MLP with linear scalar output.
class Mlp final : public Network {
public:
    explicit Mlp(const MlpSpec& spec);

    std::size_t input_dim() const override { return spec_.input_dim; }
    ArchSpec arch() const override { return spec_; }
    std::unique_ptr<Network> clone() const override { return std::make_unique<Mlp>(*this); }
    void initialize(Rng& rng) override;
    void forward(std::span<const double> x, std::size_t batch, std::span<double> out,
                 Tape& tape) const override;
    void backward(std::span<const double> dout, const Tape& tape,
                  std::span<double> grad) const override;

private:
    MlpSpec spec_;
    DenseStack stack_;
};

std::unique_ptr<Network> make_network(const ArchSpec& arch);

}  // namespace cnncausal::nn
