#include "cnncausal/nn/network.hpp"

#include "cnncausal/errors.hpp"
#include "kernels.hpp"

#include <algorithm>
#include <cmath>

namespace cnncausal::nn {
namespace {

// All kernels work on [feature][batch] buffers; the inner loops run over the
// batch index so they vectorize.

inline void axpy(double a, const double* __restrict x, double* __restrict y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(const double* __restrict x, const double* __restrict y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

inline double sum(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

void relu_forward(const double* z, double* a, std::size_t len, double& margin) {
    double m = margin;
    for (std::size_t i = 0; i < len; ++i) {
        const double v = z[i];
        a[i] = v > 0.0 ? v : 0.0;
        const double av = v < 0.0 ? -v : v;
        m = av < m ? av : m;
    }
    margin = m;
}

// da <- da ⊙ 1{z > 0}
void relu_backward(const double* z, double* da, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) da[i] = z[i] > 0.0 ? da[i] : 0.0;
}

// z (out x batch) = w (out x in) · x (in x batch) + b
void dense_forward(const double* w, const double* b, std::size_t out, std::size_t in,
                   const double* x, std::size_t batch, double* z) {
    for (std::size_t o = 0; o < out; ++o) std::fill(z + o * batch, z + (o + 1) * batch, b[o]);
    kernels::gemm_nn(w, in, x, batch, z, batch, out, in, batch);
}

void dense_backward(const double* w, std::size_t out, std::size_t in, const double* x,
                    const double* dz, std::size_t batch, double* gw, double* gb, double* dx) {
    kernels::row_sums(dz, batch, gb, out, batch);
    kernels::gemm_nt(dz, batch, x, batch, gw, in, out, in, batch);
    if (dx) {
        std::vector<double> wt(in * out);
        for (std::size_t o = 0; o < out; ++o)
            for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = w[o * in + i];
        kernels::gemm_nn(wt.data(), out, dz, batch, dx, batch, in, out, batch);
    }
}

void uniform_fill(std::span<double> v, double limit, Rng& rng) {
    for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * limit;
}

void transpose_input(std::span<const double> x, std::size_t batch, std::size_t dim,
                     std::vector<double>& out) {
    if (x.size() != batch * dim)
        throw StructuralError("network input has " + std::to_string(x.size()) +
                              " values, expected batch * input_dim = " +
                              std::to_string(batch * dim));
    out.assign(batch * dim, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < dim; ++j) out[j * batch + b] = x[b * dim + j];
}

}  // namespace

// ---------------------------------------------------------------------------

double Network::evaluate(std::span<const double> x) const {
    Tape tape;
    double out = 0.0;
    forward(x, 1, std::span<double>(&out, 1), tape);
    return out;
}

std::vector<double> Network::evaluate_batch(std::span<const double> x, std::size_t batch) const {
    Tape tape;
    std::vector<double> out(batch);
    forward(x, batch, out, tape);
    return out;
}

// --- TheoryCnn -------------------------------------------------------------

namespace {
std::size_t theory_param_count(const CnnSpec& s) {
    s.validate();
    if (s.variant != CnnVariant::Theoretical) throw ConfigError("TheoryCnn needs a theoretical spec");
    const std::size_t d_last = s.layer_length(s.depth);
    const std::size_t per_channel = s.depth * (s.span + 1) + (s.depth - 1) * (2 * s.span + 1) +
                                    d_last /* final bias */ + d_last /* readout */;
    return per_channel * s.channels;
}
}  // namespace

TheoryCnn::TheoryCnn(const CnnSpec& spec) : Network(theory_param_count(spec)), spec_(spec) {
    per_channel_ = num_params() / spec_.channels;
}

std::size_t TheoryCnn::bias_size(std::size_t l) const {
    return l < spec_.depth ? 2 * spec_.span + 1 : spec_.layer_length(spec_.depth);
}

std::size_t TheoryCnn::mask_offset(std::size_t e, std::size_t l) const {
    const std::size_t layer_block = spec_.span + 1 + 2 * spec_.span + 1;
    return e * per_channel_ + (l - 1) * layer_block;
}

std::size_t TheoryCnn::readout_offset(std::size_t e) const {
    return (e + 1) * per_channel_ - spec_.layer_length(spec_.depth);
}

FilterMask TheoryCnn::mask(std::size_t e, std::size_t l) const {
    const auto off = mask_offset(e, l);
    return {std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(off),
                                params_.begin() + static_cast<std::ptrdiff_t>(off + spec_.span + 1))};
}

std::vector<double> TheoryCnn::bias(std::size_t e, std::size_t l) const {
    const auto off = bias_offset(e, l);
    const std::size_t s = spec_.span;
    if (l == spec_.depth)
        return {params_.begin() + static_cast<std::ptrdiff_t>(off),
                params_.begin() + static_cast<std::ptrdiff_t>(off + bias_size(l))};
    StructuredBias b;
    b.head.assign(params_.begin() + static_cast<std::ptrdiff_t>(off),
                  params_.begin() + static_cast<std::ptrdiff_t>(off + s));
    b.middle = params_[off + s];
    b.tail.assign(params_.begin() + static_cast<std::ptrdiff_t>(off + s + 1),
                  params_.begin() + static_cast<std::ptrdiff_t>(off + 2 * s + 1));
    return b.materialize(spec_.layer_length(l));
}

std::span<const double> TheoryCnn::readout(std::size_t e) const {
    return std::span<const double>(params_).subspan(readout_offset(e),
                                                    spec_.layer_length(spec_.depth));
}

void TheoryCnn::set_mask(std::size_t e, std::size_t l, const FilterMask& m) {
    if (m.taps.size() != spec_.span + 1) throw StructuralError("mask length must be S+1");
    std::copy(m.taps.begin(), m.taps.end(), params_.begin() + static_cast<std::ptrdiff_t>(mask_offset(e, l)));
}

void TheoryCnn::set_structured_bias(std::size_t e, std::size_t l, const StructuredBias& b) {
    if (l >= spec_.depth) throw StructuralError("structured bias applies to layers 1..L-1");
    if (b.head.size() != spec_.span || b.tail.size() != spec_.span)
        throw StructuralError("structured bias head/tail must have S entries");
    auto it = params_.begin() + static_cast<std::ptrdiff_t>(bias_offset(e, l));
    it = std::copy(b.head.begin(), b.head.end(), it);
    *it++ = b.middle;
    std::copy(b.tail.begin(), b.tail.end(), it);
}

void TheoryCnn::set_final_bias(std::size_t e, std::span<const double> b) {
    if (b.size() != bias_size(spec_.depth)) throw StructuralError("final bias must have d_L entries");
    std::copy(b.begin(), b.end(), params_.begin() + static_cast<std::ptrdiff_t>(bias_offset(e, spec_.depth)));
}

void TheoryCnn::set_readout(std::size_t e, std::span<const double> c) {
    if (c.size() != spec_.layer_length(spec_.depth)) throw StructuralError("readout must have d_L entries");
    std::copy(c.begin(), c.end(), params_.begin() + static_cast<std::ptrdiff_t>(readout_offset(e)));
}

void TheoryCnn::initialize(Rng& rng) {
    std::fill(params_.begin(), params_.end(), 0.0);
    const double mask_limit = std::sqrt(6.0 / static_cast<double>(spec_.span + 1));
    const std::size_t d_last = spec_.layer_length(spec_.depth);
    const double readout_limit = std::sqrt(3.0 / static_cast<double>(spec_.channels * d_last));
    std::span<double> p(params_);
    for (std::size_t e = 0; e < spec_.channels; ++e) {
        for (std::size_t l = 1; l <= spec_.depth; ++l)
            uniform_fill(p.subspan(mask_offset(e, l), spec_.span + 1), mask_limit, rng);
        uniform_fill(p.subspan(readout_offset(e), d_last), readout_limit, rng);
    }
}

// Tape slots: 0 = input; for channel e, layer l: 1 + 2((e·L) + l − 1) = z, +1 = σ(z).
void TheoryCnn::forward(std::span<const double> x, std::size_t batch, std::span<double> out,
                        Tape& tape) const {
    const std::size_t s = spec_.span, depth = spec_.depth;
    if (out.size() != batch) throw StructuralError("network output span must have batch entries");
    tape.batch = batch;
    tape.kink_margin = std::numeric_limits<double>::infinity();
    tape.buffers.resize(1 + 2 * spec_.channels * depth);
    transpose_input(x, batch, spec_.input_length, tape.buffers[0]);
    std::fill(out.begin(), out.end(), 0.0);

    for (std::size_t e = 0; e < spec_.channels; ++e) {
        const double* h = tape.buffers[0].data();
        for (std::size_t l = 1; l <= depth; ++l) {
            const std::size_t in_len = spec_.layer_length(l - 1), out_len = spec_.layer_length(l);
            const std::size_t slot = 1 + 2 * (e * depth + l - 1);
            auto& z = tape.at(slot, out_len * batch);
            auto& a = tape.at(slot + 1, out_len * batch);
            const double* w = params_.data() + mask_offset(e, l);
            const auto b = bias(e, l);
            for (std::size_t t = 0; t < out_len; ++t) {
                double* zt = z.data() + t * batch;
                std::fill(zt, zt + batch, -b[t]);
                const std::size_t k_lo = t >= in_len ? t - in_len + 1 : 0;
                const std::size_t k_hi = std::min(s, t);
                for (std::size_t k = k_lo; k <= k_hi; ++k) axpy(w[k], h + (t - k) * batch, zt, batch);
            }
            relu_forward(z.data(), a.data(), z.size(), tape.kink_margin);
            h = a.data();
        }
        const double* c = params_.data() + readout_offset(e);
        const std::size_t d_last = spec_.layer_length(depth);
        for (std::size_t t = 0; t < d_last; ++t) axpy(c[t], h + t * batch, out.data(), batch);
    }
}

void TheoryCnn::backward(std::span<const double> dout, const Tape& tape,
                         std::span<double> grad) const {
    const std::size_t batch = tape.batch, s = spec_.span, depth = spec_.depth;
    if (dout.size() != batch || grad.size() != num_params())
        throw StructuralError("backward: gradient buffer sizes do not match");
    const std::size_t d_last = spec_.layer_length(depth);
    std::vector<double> da, dh;

    for (std::size_t e = 0; e < spec_.channels; ++e) {
        const std::size_t last_slot = 1 + 2 * (e * depth + depth - 1);
        const double* a_last = tape.buffers[last_slot + 1].data();
        const double* c = params_.data() + readout_offset(e);
        double* gc = grad.data() + readout_offset(e);
        da.assign(d_last * batch, 0.0);
        for (std::size_t t = 0; t < d_last; ++t) {
            gc[t] += dot(a_last + t * batch, dout.data(), batch);
            axpy(c[t], dout.data(), da.data() + t * batch, batch);
        }
        for (std::size_t l = depth; l >= 1; --l) {
            const std::size_t in_len = spec_.layer_length(l - 1), out_len = spec_.layer_length(l);
            const std::size_t slot = 1 + 2 * (e * depth + l - 1);
            const double* z = tape.buffers[slot].data();
            const double* h = l == 1 ? tape.buffers[0].data() : tape.buffers[slot - 1].data();
            relu_backward(z, da.data(), da.size());  // da is now dL/dz

            const std::size_t boff = bias_offset(e, l);
            for (std::size_t t = 0; t < out_len; ++t) {
                const double g = -sum(da.data() + t * batch, batch);
                std::size_t idx;
                if (l == depth) idx = t;
                else if (t < s) idx = t;
                else if (t >= out_len - s) idx = s + 1 + (t - (out_len - s));
                else idx = s;
                grad[boff + idx] += g;
            }
            const double* w = params_.data() + mask_offset(e, l);
            double* gw = grad.data() + mask_offset(e, l);
            for (std::size_t t = 0; t < out_len; ++t) {
                const std::size_t k_lo = t >= in_len ? t - in_len + 1 : 0;
                const std::size_t k_hi = std::min(s, t);
                for (std::size_t k = k_lo; k <= k_hi; ++k)
                    gw[k] += dot(da.data() + t * batch, h + (t - k) * batch, batch);
            }
            if (l == 1) break;
            dh.assign(in_len * batch, 0.0);
            for (std::size_t j = 0; j < in_len; ++j)
                for (std::size_t k = 0; k <= s; ++k)
                    axpy(w[k], da.data() + (j + k) * batch, dh.data() + j * batch, batch);
            std::swap(da, dh);
        }
    }
}

// --- DenseStack ------------------------------------------------------------

DenseStack::DenseStack(std::size_t input, std::vector<std::size_t> widths, bool linear_last,
                       std::size_t param_offset, std::size_t tape_offset)
    : input_(input),
      widths_(std::move(widths)),
      linear_last_(linear_last),
      param_offset_(param_offset),
      tape_offset_(tape_offset) {
    std::size_t prev = input_;
    for (std::size_t w : widths_) {
        num_params_ += w * prev + w;
        prev = w;
    }
}

void DenseStack::initialize(std::span<double> params, Rng& rng) const {
    std::size_t prev = input_, off = param_offset_;
    for (std::size_t j = 0; j < widths_.size(); ++j) {
        const std::size_t w = widths_[j];
        const bool linear = linear_last_ && j + 1 == widths_.size();
        const double limit = std::sqrt((linear ? 3.0 : 6.0) / static_cast<double>(prev));
        uniform_fill(params.subspan(off, w * prev), limit, rng);
        std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(off + w * prev), w, 0.0);
        off += w * prev + w;
        prev = w;
    }
}

const double* DenseStack::forward(std::span<const double> params, const double* in,
                                  Tape& tape) const {
    const std::size_t batch = tape.batch;
    std::size_t prev = input_, off = param_offset_;
    const double* x = in;
    for (std::size_t j = 0; j < widths_.size(); ++j) {
        const std::size_t w = widths_[j];
        auto& z = tape.at(tape_offset_ + 2 * j, w * batch);
        auto& a = tape.at(tape_offset_ + 2 * j + 1, w * batch);
        dense_forward(params.data() + off, params.data() + off + w * prev, w, prev, x, batch,
                      z.data());
        if (linear_last_ && j + 1 == widths_.size()) a = z;
        else relu_forward(z.data(), a.data(), z.size(), tape.kink_margin);
        x = a.data();
        off += w * prev + w;
        prev = w;
    }
    return x;
}

void DenseStack::backward(std::span<const double> params, const double* in, const double* dout,
                          const Tape& tape, std::span<double> grad, double* din) const {
    const std::size_t batch = tape.batch;
    if (widths_.empty()) {
        if (din) axpy(1.0, dout, din, input_ * batch);
        return;
    }
    std::vector<std::size_t> offsets(widths_.size());
    std::size_t prev = input_, off = param_offset_;
    for (std::size_t j = 0; j < widths_.size(); ++j) {
        offsets[j] = off;
        off += widths_[j] * prev + widths_[j];
        prev = widths_[j];
    }
    std::vector<double> dz(dout, dout + widths_.back() * batch), dx;
    for (std::size_t j = widths_.size(); j-- > 0;) {
        const std::size_t w = widths_[j];
        const std::size_t fan_in = j == 0 ? input_ : widths_[j - 1];
        if (!(linear_last_ && j + 1 == widths_.size()))
            relu_backward(tape.buffers[tape_offset_ + 2 * j].data(), dz.data(), dz.size());
        const double* x = j == 0 ? in : tape.buffers[tape_offset_ + 2 * (j - 1) + 1].data();
        double* dx_ptr = nullptr;
        if (j > 0) {
            dx.assign(fan_in * batch, 0.0);
            dx_ptr = dx.data();
        } else {
            dx_ptr = din;
        }
        dense_backward(params.data() + offsets[j], w, fan_in, x, dz.data(), batch,
                       grad.data() + offsets[j], grad.data() + offsets[j] + w * fan_in, dx_ptr);
        if (j > 0) std::swap(dz, dx);
    }
}

// --- PracticalCnn ----------------------------------------------------------

namespace {
std::size_t practical_param_count(const CnnSpec& s) {
    s.validate();
    if (s.variant != CnnVariant::Practical) throw ConfigError("PracticalCnn needs a practical spec");
    std::size_t count = 0, in_ch = s.series_count, len = s.series_length;
    if (s.series_count > 0) {
        for (std::size_t c : s.channels_per_layer) {
            count += c * in_ch * (s.span + 1) + c;
            in_ch = c;
            len -= s.span;
        }
    }
    const std::size_t flat = s.series_count > 0 ? in_ch * len : 0;
    std::size_t prev = s.static_count;
    for (std::size_t w : s.static_branch_widths) {
        count += w * prev + w;
        prev = w;
    }
    prev = flat + (s.static_count > 0 ? prev : 0);
    for (std::size_t w : s.head_widths) {
        count += w * prev + w;
        prev = w;
    }
    return count + prev + 1;
}
}  // namespace

PracticalCnn::PracticalCnn(const CnnSpec& spec)
    : Network(practical_param_count(spec)), spec_(spec) {
    const std::size_t k = spec_.span + 1;
    std::size_t off = 0, in_ch = spec_.series_count, len = spec_.series_length;
    if (spec_.series_count > 0) {
        for (std::size_t c : spec_.channels_per_layer) {
            ConvLayer layer{in_ch, c, len, len - spec_.span, off, off + c * in_ch * k};
            conv_.push_back(layer);
            off += c * in_ch * k + c;
            in_ch = c;
            len -= spec_.span;
        }
        flat_width_ = in_ch * len;
    }
    std::size_t slot = 1 + 2 * conv_.size();
    static_branch_ = DenseStack(spec_.static_count, spec_.static_branch_widths, false, off, slot);
    off += static_branch_.num_params();
    slot += static_branch_.tape_slots();
    concat_slot_ = slot++;
    const std::size_t concat = flat_width_ + (spec_.static_count > 0 ? static_branch_.output_width() : 0);
    auto head_widths = spec_.head_widths;
    head_widths.push_back(1);
    head_ = DenseStack(concat, head_widths, true, off, slot);
}

void PracticalCnn::initialize(Rng& rng) {
    std::fill(params_.begin(), params_.end(), 0.0);
    std::span<double> p(params_);
    for (const auto& c : conv_) {
        const double limit = std::sqrt(6.0 / static_cast<double>(c.in_channels * (spec_.span + 1)));
        uniform_fill(p.subspan(c.weight_offset, c.out_channels * c.in_channels * (spec_.span + 1)),
                     limit, rng);
    }
    static_branch_.initialize(p, rng);
    head_.initialize(p, rng);
}

void PracticalCnn::forward(std::span<const double> x, std::size_t batch, std::span<double> out,
                           Tape& tape) const {
    if (out.size() != batch) throw StructuralError("network output span must have batch entries");
    const std::size_t k = spec_.span + 1;
    tape.batch = batch;
    tape.kink_margin = std::numeric_limits<double>::infinity();
    tape.buffers.resize(concat_slot_ + 1 + head_.tape_slots());
    transpose_input(x, batch, input_dim(), tape.buffers[0]);

    const double* h = tape.buffers[0].data();
    for (std::size_t j = 0; j < conv_.size(); ++j) {
        const auto& c = conv_[j];
        auto& z = tape.at(1 + 2 * j, c.out_channels * c.out_length * batch);
        auto& a = tape.at(2 + 2 * j, c.out_channels * c.out_length * batch);
        const double* w = params_.data() + c.weight_offset;
        const double* b = params_.data() + c.bias_offset;
        // Tap kk: Z (out x len·batch) += W_kk (out x in) · H shifted by kk steps.
        const std::size_t co = c.out_channels, ci = c.in_channels, cols = c.out_length * batch;
        for (std::size_t o = 0; o < co; ++o) std::fill(z.data() + o * cols, z.data() + (o + 1) * cols, b[o]);
        std::vector<double> wk(co * ci);
        for (std::size_t kk = 0; kk < k; ++kk) {
            for (std::size_t o = 0; o < co; ++o)
                for (std::size_t i = 0; i < ci; ++i) wk[o * ci + i] = w[(o * ci + i) * k + kk];
            kernels::gemm_nn(wk.data(), ci, h + kk * batch, c.in_length * batch, z.data(), cols, co, ci, cols);
        }
        relu_forward(z.data(), a.data(), z.size(), tape.kink_margin);
        h = a.data();
    }

    const double* statics =
        tape.buffers[0].data() + spec_.series_count * spec_.series_length * batch;
    const double* static_out = spec_.static_count > 0 ? static_branch_.forward(params_, statics, tape)
                                                      : nullptr;
    const std::size_t static_width = spec_.static_count > 0 ? static_branch_.output_width() : 0;
    auto& concat = tape.at(concat_slot_, (flat_width_ + static_width) * batch);
    if (flat_width_ > 0) std::copy(h, h + flat_width_ * batch, concat.begin());
    if (static_width > 0)
        std::copy(static_out, static_out + static_width * batch,
                  concat.begin() + static_cast<std::ptrdiff_t>(flat_width_ * batch));
    const double* y = head_.forward(params_, tape.buffers[concat_slot_].data(), tape);
    std::copy(y, y + batch, out.begin());
}

void PracticalCnn::backward(std::span<const double> dout, const Tape& tape,
                            std::span<double> grad) const {
    const std::size_t batch = tape.batch, k = spec_.span + 1;
    if (dout.size() != batch || grad.size() != num_params())
        throw StructuralError("backward: gradient buffer sizes do not match");
    const std::size_t static_width = spec_.static_count > 0 ? static_branch_.output_width() : 0;
    std::vector<double> dconcat((flat_width_ + static_width) * batch, 0.0);
    head_.backward(params_, tape.buffers[concat_slot_].data(), dout.data(), tape, grad,
                   dconcat.data());

    if (static_width > 0) {
        const double* statics =
            tape.buffers[0].data() + spec_.series_count * spec_.series_length * batch;
        static_branch_.backward(params_, statics, dconcat.data() + flat_width_ * batch, tape, grad,
                                nullptr);
    }
    if (conv_.empty()) return;

    std::vector<double> da(dconcat.begin(),
                           dconcat.begin() + static_cast<std::ptrdiff_t>(flat_width_ * batch));
    std::vector<double> dh;
    for (std::size_t j = conv_.size(); j-- > 0;) {
        const auto& c = conv_[j];
        relu_backward(tape.buffers[1 + 2 * j].data(), da.data(), da.size());
        const double* h = j == 0 ? tape.buffers[0].data() : tape.buffers[2 * j].data();
        const double* w = params_.data() + c.weight_offset;
        double* gw = grad.data() + c.weight_offset;
        double* gb = grad.data() + c.bias_offset;
        if (j > 0) dh.assign(c.in_channels * c.in_length * batch, 0.0);
        const std::size_t co = c.out_channels, ci = c.in_channels, cols = c.out_length * batch;
        const std::size_t ld = c.in_length * batch;
        kernels::row_sums(da.data(), cols, gb, co, cols);
        std::vector<double> gk(co * ci), wt(ci * co);
        for (std::size_t kk = 0; kk < k; ++kk) {
            std::fill(gk.begin(), gk.end(), 0.0);
            kernels::gemm_nt(da.data(), cols, h + kk * batch, ld, gk.data(), ci, co, ci, cols);
            for (std::size_t o = 0; o < co; ++o)
                for (std::size_t i = 0; i < ci; ++i) {
                    gw[(o * ci + i) * k + kk] += gk[o * ci + i];
                    wt[i * co + o] = w[(o * ci + i) * k + kk];
                }
            if (j > 0) kernels::gemm_nn(wt.data(), co, da.data(), cols, dh.data() + kk * batch, ld, ci, co, cols);
        }
        if (j > 0) std::swap(da, dh);
    }
}

// --- Mlp -------------------------------------------------------------------

Mlp::Mlp(const MlpSpec& spec)
    : Network([&] {
          spec.validate();
          return DenseStack(spec.input_dim, {spec.hidden[0], spec.hidden[1], 1}, true, 0, 1)
              .num_params();
      }()),
      spec_(spec),
      stack_(spec.input_dim, {spec.hidden[0], spec.hidden[1], 1}, true, 0, 1) {}

void Mlp::initialize(Rng& rng) { stack_.initialize(params_, rng); }

void Mlp::forward(std::span<const double> x, std::size_t batch, std::span<double> out,
                  Tape& tape) const {
    if (out.size() != batch) throw StructuralError("network output span must have batch entries");
    tape.batch = batch;
    tape.kink_margin = std::numeric_limits<double>::infinity();
    tape.buffers.resize(1 + stack_.tape_slots());
    transpose_input(x, batch, spec_.input_dim, tape.buffers[0]);
    const double* y = stack_.forward(params_, tape.buffers[0].data(), tape);
    std::copy(y, y + batch, out.begin());
}

void Mlp::backward(std::span<const double> dout, const Tape& tape, std::span<double> grad) const {
    if (dout.size() != tape.batch || grad.size() != num_params())
        throw StructuralError("backward: gradient buffer sizes do not match");
    stack_.backward(params_, tape.buffers[0].data(), dout.data(), tape, grad, nullptr);
}

std::unique_ptr<Network> make_network(const ArchSpec& arch) {
    if (const auto* c = std::get_if<CnnSpec>(&arch)) {
        if (c->variant == CnnVariant::Theoretical) return std::make_unique<TheoryCnn>(*c);
        return std::make_unique<PracticalCnn>(*c);
    }
    return std::make_unique<Mlp>(std::get<MlpSpec>(arch));
}

}  // namespace cnncausal::nn
