#include "cnncausal/nn/train.hpp"

#include "cnncausal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cnncausal::nn {
namespace {

double softplus(double r) { return std::max(r, 0.0) + std::log1p(std::exp(-std::abs(r))); }

LossKind default_loss(NuisanceKind kind) {
    return kind == NuisanceKind::Outcome ? LossKind::Squared : LossKind::Logistic;
}

// Loss of the network output `raw` against the (scaled) target, with the
// outcome clamp applied. Writes ∂loss/∂raw to *deriv when non-null.
struct LossEval {
    LossKind loss;
    bool clamp;
    double lo, hi;

    double operator()(double raw, double target, double* deriv) const {
        if (!clamp) {
            if (deriv) *deriv = loss_derivative(loss, raw, target);
            return loss_value(loss, raw, target);
        }
        const double eff = std::clamp(raw, lo, hi);
        if (deriv) *deriv = (raw > lo && raw < hi) ? loss_derivative(loss, eff, target) : 0.0;
        return loss_value(loss, eff, target);
    }
};

}  // namespace

double loss_value(LossKind kind, double prediction, double target) {
    if (kind == LossKind::Squared) return (prediction - target) * (prediction - target);
    if (target != 0.0 && target != 1.0)
        throw DomainError("logistic loss needs a 0/1 target, got " + std::to_string(target));
    return softplus(prediction) - target * prediction;
}

double loss_derivative(LossKind kind, double prediction, double target) {
    if (kind == LossKind::Squared) return 2.0 * (prediction - target);
    if (target != 0.0 && target != 1.0)
        throw DomainError("logistic loss needs a 0/1 target, got " + std::to_string(target));
    return logistic(prediction) - target;
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr = cfg_.step * std::sqrt(c2) / c1;
    const double eps = cfg_.epsilon * std::sqrt(c2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        params[i] -= lr * m_[i] / (std::sqrt(v_[i]) + eps);
    }
}

void TrainConfig::validate() const {
    if (!(trim > 0.0 && trim < 0.5)) throw ConfigError("train: trim must lie in (0, 0.5)");
    if (m_prime && !(*m_prime > 0.0)) throw ConfigError("train: M' must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (!(adam.step > 0.0)) throw ConfigError("train: step size must be > 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
        throw ConfigError("train: moment decays must lie in [0, 1)");
}

// --- NuisanceModel ---------------------------------------------------------

std::vector<double> NuisanceModel::scale_row(std::span<const double> x) const {
    if (x.size() != scale_min_.size())
        throw StructuralError("model expects " + std::to_string(scale_min_.size()) +
                              " covariates, got " + std::to_string(x.size()));
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double range = scale_max_[j] - scale_min_[j];
        out[j] = range > 0.0 ? 2.0 * (x[j] - scale_min_[j]) / range - 1.0 : 0.0;
    }
    return out;
}

double NuisanceModel::finish(double raw) const {
    if (kind_ == NuisanceKind::Propensity) return std::clamp(logistic(raw), trim_, 1.0 - trim_);
    return std::clamp(target_mean_ + target_scale_ * raw, -m_prime_, m_prime_);
}

double NuisanceModel::predict(std::span<const double> x) const {
    const auto row = scale_row(x);
    return finish(net_->evaluate(row));
}

Vector NuisanceModel::raw_output(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim())
        throw StructuralError("model expects " + std::to_string(input_dim()) + " covariates");
    const std::size_t n = static_cast<std::size_t>(x.rows()), d = input_dim();
    Vector out(x.rows());
    constexpr std::size_t chunk = 256;
    std::vector<double> buf, res;
    Tape tape;
    std::vector<double> raw(d);
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t b = std::min(chunk, n - start);
        buf.resize(b * d);
        res.resize(b);
        for (std::size_t r = 0; r < b; ++r) {
            for (std::size_t j = 0; j < d; ++j)
                raw[j] = x(static_cast<Eigen::Index>(start + r), static_cast<Eigen::Index>(j));
            const auto s = scale_row(raw);
            std::copy(s.begin(), s.end(), buf.begin() + static_cast<std::ptrdiff_t>(r * d));
        }
        net_->forward(buf, b, res, tape);
        for (std::size_t r = 0; r < b; ++r) out[static_cast<Eigen::Index>(start + r)] = res[r];
    }
    return out;
}

Vector NuisanceModel::predict(const Matrix& x) const {
    Vector raw = raw_output(x);
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw[i] = finish(raw[i]);
    return raw;
}

// --- training --------------------------------------------------------------

NuisanceModel train_network(const Matrix& x, const Vector& target, NuisanceKind kind,
                            const ArchSpec& arch, const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t n = static_cast<std::size_t>(x.rows());
    const std::size_t d = static_cast<std::size_t>(x.cols());
    if (n == 0) throw DataError("train: empty training set");
    if (static_cast<std::size_t>(target.size()) != n)
        throw StructuralError("train: target length does not match covariate rows");
    if (input_dim(arch) != d)
        throw StructuralError("train: architecture expects " + std::to_string(input_dim(arch)) +
                              " inputs, data has " + std::to_string(d));
    if (!x.allFinite() || !target.allFinite()) throw DataError("train: non-finite training data");

    NuisanceModel model;
    model.kind_ = kind;
    model.trim_ = cfg.trim;

    model.scale_min_.resize(d);
    model.scale_max_.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        model.scale_min_[j] = x.col(static_cast<Eigen::Index>(j)).minCoeff();
        model.scale_max_[j] = x.col(static_cast<Eigen::Index>(j)).maxCoeff();
    }

    const LossKind loss = cfg.loss.value_or(default_loss(kind));
    std::vector<double> z(n);
    LossEval eval{loss, false, 0.0, 0.0};
    if (kind == NuisanceKind::Outcome) {
        const double max_abs = target.cwiseAbs().maxCoeff();
        model.m_prime_ = cfg.m_prime.value_or(2.0 * max_abs);
        if (cfg.standardize_target && loss == LossKind::Squared) {
            model.target_mean_ = target.mean();
            const double var = (target.array() - model.target_mean_).square().mean();
            model.target_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        for (std::size_t i = 0; i < n; ++i)
            z[i] = (target[static_cast<Eigen::Index>(i)] - model.target_mean_) / model.target_scale_;
        eval.clamp = true;
        eval.lo = (-model.m_prime_ - model.target_mean_) / model.target_scale_;
        eval.hi = (model.m_prime_ - model.target_mean_) / model.target_scale_;
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = target[static_cast<Eigen::Index>(i)];
            if (z[i] != 0.0 && z[i] != 1.0) throw DataError("train: propensity targets must be 0/1");
        }
    }

    // Scaled design, row-major.
    std::vector<double> xs(n * d);
    {
        std::vector<double> row(d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j)
                row[j] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            const auto s = model.scale_row(row);
            std::copy(s.begin(), s.end(), xs.begin() + static_cast<std::ptrdiff_t>(i * d));
        }
    }

    auto net = make_network(arch);
    net->initialize(rng);

    Tape tape;
    const std::size_t batch = std::min(cfg.batch_size, n);
    std::vector<double> xb(batch * d), out(batch), dout(batch), grad(net->num_params());

    auto full_loss = [&](const Network& nw) {
        constexpr std::size_t chunk = 256;
        std::vector<double> res;
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += chunk) {
            const std::size_t b = std::min(chunk, n - start);
            res.resize(b);
            nw.forward(std::span<const double>(xs).subspan(start * d, b * d), b, res, tape);
            for (std::size_t r = 0; r < b; ++r) total += eval(res[r], z[start + r], nullptr);
        }
        return total / static_cast<double>(n);
    };

    TrainingTrace trace;
    trace.initial_loss = full_loss(*net);
    if (!std::isfinite(trace.initial_loss))
        throw DivergenceError("train: non-finite loss at initialization (epoch 0)", 0);
    const std::vector<double> initial(net->params().begin(), net->params().end());

    Adam adam(net->num_params(), cfg.adam);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best = trace.initial_loss;
    int stale = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t b = std::min(batch, n - start);
            xb.resize(b * d);
            out.resize(b);
            dout.resize(b);
            for (std::size_t r = 0; r < b; ++r)
                std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>(order[start + r] * d), d,
                            xb.begin() + static_cast<std::ptrdiff_t>(r * d));
            net->forward(xb, b, out, tape);
            double batch_total = 0.0;
            for (std::size_t r = 0; r < b; ++r) {
                double g = 0.0;
                batch_total += eval(out[r], z[order[start + r]], &g);
                dout[r] = g / static_cast<double>(b);
            }
            if (!std::isfinite(batch_total))
                throw DivergenceError("train: non-finite loss in epoch " + std::to_string(epoch),
                                      epoch);
            epoch_total += batch_total;
            std::fill(grad.begin(), grad.end(), 0.0);
            net->backward(dout, tape, grad);
            adam.step(net->params(), grad);
        }
        const double epoch_loss = epoch_total / static_cast<double>(n);
        trace.epoch_losses.push_back(epoch_loss);
        trace.epochs_run = epoch;
        if (epoch_loss < best - cfg.min_improvement) {
            best = epoch_loss;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }

    trace.final_loss = full_loss(*net);
    if (!std::isfinite(trace.final_loss))
        throw DivergenceError("train: non-finite loss after epoch " +
                                  std::to_string(trace.epochs_run),
                              trace.epochs_run);
    if (trace.final_loss > trace.initial_loss) {
        std::copy(initial.begin(), initial.end(), net->params().begin());
        trace.final_loss = trace.initial_loss;
        trace.reverted_to_initial = true;
    }
    model.trace_ = std::move(trace);
    model.net_ = std::move(net);
    return model;
}

NuisanceModel train_nuisance(const Dataset& data, NuisanceKind kind, int arm,
                             const ArchSpec& arch, const TrainConfig& cfg, Rng& rng) {
    data.validate();
    if (kind == NuisanceKind::Propensity) {
        Vector t(static_cast<Eigen::Index>(data.n()));
        for (std::size_t i = 0; i < data.n(); ++i) t[static_cast<Eigen::Index>(i)] = data.t[i];
        return train_network(data.x, t, kind, arch, cfg, rng);
    }
    if (arm != 0 && arm != 1) throw ConfigError("train_nuisance: arm must be 0 or 1");
    const Dataset sub = data.subset_arm(arm);
    if (sub.n() == 0)
        throw DataError("train_nuisance: no observations with t = " + std::to_string(arm));
    return train_network(sub.x, sub.y, kind, arch, cfg, rng);
}

}  // namespace cnncausal::nn
