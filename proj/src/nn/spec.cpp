#include "cnncausal/nn/spec.hpp"

#include "cnncausal/errors.hpp"

#include <cmath>
#include <sstream>

namespace cnncausal::nn {

CnnSpec CnnSpec::theoretical(std::size_t d, std::size_t span, std::size_t depth,
                             std::size_t channels) {
    CnnSpec s;
    s.variant = CnnVariant::Theoretical;
    s.input_length = d;
    s.span = span;
    s.depth = depth;
    s.channels = channels;
    return s;
}

CnnSpec CnnSpec::practical(std::size_t series_count, std::size_t series_length,
                           std::size_t static_count, std::vector<std::size_t> channels_per_layer,
                           std::size_t span) {
    CnnSpec s;
    s.variant = CnnVariant::Practical;
    s.series_count = series_count;
    s.series_length = series_length;
    s.static_count = static_count;
    s.channels_per_layer = std::move(channels_per_layer);
    s.span = span;
    return s;
}

std::size_t CnnSpec::input_dim() const {
    if (variant == CnnVariant::Theoretical) return input_length;
    return series_count * series_length + static_count;
}

void CnnSpec::validate() const {
    if (span < 1) throw ConfigError("cnn: span S must be >= 1");
    if (variant == CnnVariant::Theoretical) {
        if (input_length < 1) throw ConfigError("cnn: input length d must be >= 1");
        if (depth < 1 || channels < 1) throw ConfigError("cnn: depth L and channels E must be >= 1");
        if (span > input_length)
            throw ConfigError("cnn: span S must not exceed the input length d");
        if (require_depth_bound) {
            if (span < 2) throw ConfigError("cnn: approximation regime needs S >= 2");
            if (static_cast<double>(depth) <
                2.0 * static_cast<double>(input_length) / static_cast<double>(span - 1))
                throw ConfigError("cnn: approximation regime needs L >= 2d/(S-1)");
        }
        return;
    }
    if (series_count > 0) {
        if (channels_per_layer.empty()) throw ConfigError("cnn: no convolution layers");
        std::size_t len = series_length;
        for (std::size_t c : channels_per_layer) {
            if (c < 1) throw ConfigError("cnn: channel counts must be >= 1");
            if (len < span + 1)
                throw ConfigError("cnn: series of length " + std::to_string(series_length) +
                                  " too short for " + std::to_string(channels_per_layer.size()) +
                                  " valid convolutions with span " + std::to_string(span));
            len -= span;
        }
    }
    if (series_count == 0 && static_count == 0) throw ConfigError("cnn: network has no inputs");
    for (std::size_t w : static_branch_widths)
        if (w < 1) throw ConfigError("cnn: static branch widths must be >= 1");
    for (std::size_t w : head_widths)
        if (w < 1) throw ConfigError("cnn: head widths must be >= 1");
}

void MlpSpec::validate() const {
    if (input_dim < 1) throw ConfigError("mlp: input dimension must be >= 1");
    if (hidden.size() != 2) throw ConfigError("mlp: exactly two hidden layers are supported");
    for (std::size_t w : hidden)
        if (w < 1) throw ConfigError("mlp: hidden widths must be >= 1");
}

std::size_t input_dim(const ArchSpec& arch) {
    return std::visit(
        [](const auto& a) -> std::size_t {
            if constexpr (std::is_same_v<std::decay_t<decltype(a)>, CnnSpec>) return a.input_dim();
            else return a.input_dim;
        },
        arch);
}

std::string describe(const ArchSpec& arch) {
    std::ostringstream os;
    auto list = [&os](const std::vector<std::size_t>& v) {
        os << '[';
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        os << ']';
    };
    if (const auto* c = std::get_if<CnnSpec>(&arch)) {
        if (c->variant == CnnVariant::Theoretical) {
            os << "cnn-theoretical(d=" << c->input_length << ",S=" << c->span << ",L=" << c->depth
               << ",E=" << c->channels << ")";
        } else {
            os << "cnn-practical(series=" << c->series_count << "x" << c->series_length
               << ",static=" << c->static_count << ",S=" << c->span << ",channels=";
            list(c->channels_per_layer);
            os << ",static_branch=";
            list(c->static_branch_widths);
            os << ",head=";
            list(c->head_widths);
            os << ")";
        }
    } else {
        const auto& m = std::get<MlpSpec>(arch);
        os << "mlp(input=" << m.input_dim << ",hidden=";
        list(m.hidden);
        os << ")";
    }
    return os.str();
}

std::size_t parameter_count(const CnnSpec& spec) {
    if (spec.variant != CnnVariant::Theoretical)
        throw ConfigError("parameter_count: only the theoretical CNN variant is supported");
    const std::size_t d = spec.input_length, s = spec.span, L = spec.depth, E = spec.channels;
    return E * (d * (1 + s) * (L - 1) + s * (1 + s) * L * (L - 1) / 2 + (s + 3) * (d + s * L));
}

RateSchedule rate_schedule(std::size_t n, std::size_t d, double c_e, double c_l) {
    if (n < 2 || d < 2) throw DomainError("rate_schedule: need n >= 2 and d >= 2");
    if (!(c_e > 0.0) || !(c_l > 0.0)) throw DomainError("rate_schedule: constants must be > 0");
    const auto nd = static_cast<double>(n);
    const auto dd = static_cast<double>(d);
    const double e = c_e * std::pow(nd, dd / (2.0 * dd + 4.0));
    const double log_n = std::log(nd);
    const double l = c_l * std::pow(nd, 1.0 / (4.0 * dd + 8.0)) * log_n * log_n;
    return {std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(e))),
            std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(l)))};
}

}  // namespace cnncausal::nn
