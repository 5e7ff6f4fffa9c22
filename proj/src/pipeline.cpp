#include "cnncausal/pipeline.hpp"

#include "cnncausal/errors.hpp"

#include <algorithm>
#include <cctype>

namespace cnncausal {

std::string to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::DRcnn: return "DRcnn";
        case EstimatorKind::DRmlp: return "DRmlp";
        case EstimatorKind::DRss: return "DRss";
        case EstimatorKind::DRds: return "DRds";
        case EstimatorKind::ORds: return "ORds";
        case EstimatorKind::Naive: return "naive";
    }
    return "?";
}

EstimatorKind parse_estimator(const std::string& s) {
    std::string low(s);
    std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
    for (auto k : {EstimatorKind::DRcnn, EstimatorKind::DRmlp, EstimatorKind::DRss,
                   EstimatorKind::DRds, EstimatorKind::ORds, EstimatorKind::Naive}) {
        std::string name = to_string(k);
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
        if (name == low) return k;
    }
    throw ConfigError("unknown estimator '" + s + "' (expected DRcnn, DRmlp, DRss, DRds, ORds or naive)");
}

nn::ArchSpec cnn_arch(const Dataset& data, const NnSettings& s, nn::NuisanceKind kind) {
    const auto& channels =
        kind == nn::NuisanceKind::Outcome ? s.outcome_channels : s.propensity_channels;
    nn::CnnSpec spec;
    if (data.layout) {
        if (data.layout->series_count() == 0)
            throw ConfigError("the CNN needs at least one time series in the column layout");
        spec = nn::CnnSpec::practical(data.layout->series_count(), data.layout->series_length(),
                                      data.layout->static_count(), channels, s.span);
    } else {
        spec = nn::CnnSpec::practical(1, data.d(), 0, channels, s.span);
    }
    spec.static_branch_widths = spec.static_count > 0 ? s.static_branch : std::vector<std::size_t>{};
    spec.head_widths = s.head;
    spec.validate();
    return spec;
}

nn::ArchSpec mlp_arch(const Dataset& data, const NnSettings& s, nn::NuisanceKind kind) {
    nn::MlpSpec spec{data.d(), kind == nn::NuisanceKind::Outcome ? s.outcome_hidden : s.propensity_hidden};
    spec.validate();
    return spec;
}

NuisanceFit fit_network_nuisances(const Dataset& data, bool use_cnn, const PipelineSettings& s,
                                  Rng& rng) {
    data.validate_for_estimation();
    auto arch = [&](nn::NuisanceKind kind) {
        return use_cnn ? cnn_arch(data, s.nn, kind) : mlp_arch(data, s.nn, kind);
    };
    nn::TrainConfig cfg = s.nn.train;
    cfg.trim = s.trim;
    const std::uint64_t base = rng.next_u64();

    Rng r0 = Rng::substream(base, 0);
    const auto mu0 = nn::train_nuisance(data, nn::NuisanceKind::Outcome, 0,
                                        arch(nn::NuisanceKind::Outcome), cfg, r0);
    Rng rp = Rng::substream(base, 1);
    const auto ps = nn::train_nuisance(data, nn::NuisanceKind::Propensity, 0,
                                       arch(nn::NuisanceKind::Propensity), cfg, rp);
    std::optional<Vector> mu1;
    if (s.estimand == Estimand::ACE) {
        Rng r1 = Rng::substream(base, 2);
        mu1 = nn::train_nuisance(data, nn::NuisanceKind::Outcome, 1,
                                 arch(nn::NuisanceKind::Outcome), cfg, r1)
                  .predict(data.x);
    }
    return NuisanceFit::from(data, mu0.predict(data.x), std::move(mu1), ps.predict(data.x));
}

EstimateReport run_estimator(EstimatorKind kind, const Dataset& data, const PipelineSettings& s,
                             Rng& rng) {
    data.validate_for_estimation();
    auto aipw = [&](const NuisanceFit& fit) {
        return s.estimand == Estimand::ACE ? aipw_ace(data, fit, s.alpha) : aipw_acet(data, fit, s.alpha);
    };
    auto lasso = [&](Selection strategy) {
        PostLassoConfig cfg = s.lasso;
        cfg.strategy = strategy;
        cfg.trim = s.trim;
        cfg.fit_mu1 = s.estimand == Estimand::ACE;
        cfg.seed = rng.next_u64();
        return select_and_refit(data, cfg).fit;
    };

    EstimateReport r;
    switch (kind) {
        case EstimatorKind::DRcnn: r = aipw(fit_network_nuisances(data, true, s, rng)); break;
        case EstimatorKind::DRmlp: r = aipw(fit_network_nuisances(data, false, s, rng)); break;
        case EstimatorKind::DRss: r = aipw(lasso(Selection::Single)); break;
        case EstimatorKind::DRds: r = aipw(lasso(Selection::Double)); break;
        case EstimatorKind::ORds: r = or_report(data, lasso(Selection::Double), s.estimand, s.alpha); break;
        case EstimatorKind::Naive: r = naive_report(data, s.estimand, s.alpha); break;
    }
    r.method = to_string(kind);
    return r;
}

}  // namespace cnncausal
