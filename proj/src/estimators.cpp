#include "cnncausal/estimators.hpp"

#include "cnncausal/errors.hpp"
#include "cnncausal/numeric.hpp"

#include <cmath>

namespace cnncausal {
namespace {

void check_prob(double p, const char* what) {
    if (!(p > 0.0 && p < 1.0))
        throw DomainError(std::string(what) + ": probability must lie in (0,1), got " +
                          std::to_string(p));
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
}

EstimateReport make_report(const Dataset& data, Estimand estimand, double tau, double variance,
                           double alpha) {
    EstimateReport r;
    r.estimand = estimand;
    r.tau_hat = tau;
    r.variance = variance;
    r.alpha = alpha;
    r.n = data.n();
    r.n1 = data.n_treated();
    r.n0 = r.n - r.n1;
    r.se = std::sqrt(variance / static_cast<double>(r.n));
    std::tie(r.ci_low, r.ci_high) = confidence_interval(tau, variance, r.n, alpha);
    return r;
}

}  // namespace

std::string to_string(Estimand e) { return e == Estimand::ACE ? "ACE" : "ACET"; }

Estimand parse_estimand(const std::string& s) {
    if (s == "ace" || s == "ACE") return Estimand::ACE;
    if (s == "acet" || s == "ACET") return Estimand::ACET;
    throw ConfigError("unknown estimand '" + s + "' (expected ace or acet)");
}

NuisanceFit NuisanceFit::from(const Dataset& data, Vector mu0, std::optional<Vector> mu1,
                              Vector p) {
    NuisanceFit f;
    f.mu0 = std::move(mu0);
    f.mu1 = std::move(mu1);
    f.p = std::move(p);
    f.p_marginal = static_cast<double>(data.n_treated()) / static_cast<double>(data.n());
    return f;
}

void NuisanceFit::validate(std::size_t n) const {
    const auto len = static_cast<Eigen::Index>(n);
    if (mu0.size() != len || p.size() != len || (mu1 && mu1->size() != len))
        throw StructuralError("nuisance fit length does not match the dataset");
    if (!mu0.allFinite() || (mu1 && !mu1->allFinite()) || !p.allFinite())
        throw DomainError("nuisance fit contains non-finite values");
    for (Eigen::Index i = 0; i < len; ++i) check_prob(p[i], "propensity");
    check_prob(p_marginal, "marginal treatment probability");
}

double psi_ace(double y, int t_i, double mu_t, double p_t, int t) {
    check_prob(p_t, "psi_ace");
    return (t_i == t ? (y - mu_t) / p_t : 0.0) + mu_t;
}

double psi_acet(double y, int t_i, double mu_t, double p_treat, double p_marginal, int t,
                int t_prime) {
    check_prob(p_treat, "psi_acet");
    check_prob(p_marginal, "psi_acet marginal");
    const double p_t = (t == 1) ? p_treat : 1.0 - p_treat;
    const double p_tprime = (t_prime == 1) ? p_treat : 1.0 - p_treat;
    const double weighted = (t_i == t) ? (p_tprime / p_marginal) * (y - mu_t) / p_t : 0.0;
    const double plug_in = (t_i == t_prime) ? mu_t / p_marginal : 0.0;
    return weighted + plug_in;
}

double ace_variance(const Dataset& data, const NuisanceFit& fit) {
    if (!fit.mu1) throw ConfigError("ACE requires a treated-arm outcome model (mu1)");
    const std::size_t n = data.n();
    fit.validate(n);
    const Vector& mu1 = *fit.mu1;
    double mean_psi1 = 0.0, mean_psi0 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        mean_psi1 += psi_ace(data.y[i], data.t[k], mu1[i], fit.p[i], 1);
        mean_psi0 += psi_ace(data.y[i], data.t[k], fit.mu0[i], 1.0 - fit.p[i], 0);
    }
    mean_psi1 /= static_cast<double>(n);
    mean_psi0 /= static_cast<double>(n);

    double v = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const double p = fit.p[i];
        if (data.t[k] == 1) {
            const double r = data.y[i] - mu1[i];
            v += r * r / (p * p);
        } else {
            const double r = data.y[i] - fit.mu0[i];
            v += r * r / ((1.0 - p) * (1.0 - p));
        }
        const double c1 = mu1[i] - mean_psi1;
        const double c0 = fit.mu0[i] - mean_psi0;
        v += c1 * c1 + c0 * c0;
    }
    return v / static_cast<double>(n);
}

double acet_variance(const Dataset& data, const NuisanceFit& fit, double tau) {
    const std::size_t n = data.n();
    fit.validate(n);
    const std::size_t n1 = data.n_treated();
    if (n1 == 0) throw DataError("ACET requires at least one treated unit");
    double treated = 0.0, control = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const double r = data.y[i] - fit.mu0[i];
        if (data.t[k] == 1) {
            treated += (r - tau) * (r - tau);
        } else {
            const double odds = fit.p[i] / (1.0 - fit.p[i]);
            control += odds * odds * r * r;
        }
    }
    const double scale = static_cast<double>(n) / static_cast<double>(n1);
    return scale * scale * (treated + control) / static_cast<double>(n);
}

EstimateReport aipw_ace(const Dataset& data, const NuisanceFit& fit, double alpha) {
    check_alpha(alpha);
    if (!fit.mu1) throw ConfigError("ACE requires a treated-arm outcome model (mu1)");
    data.validate_for_estimation();
    fit.validate(data.n());
    const Vector& mu1 = *fit.mu1;
    double sum = 0.0;
    for (std::size_t k = 0; k < data.n(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        sum += psi_ace(data.y[i], data.t[k], mu1[i], fit.p[i], 1) -
               psi_ace(data.y[i], data.t[k], fit.mu0[i], 1.0 - fit.p[i], 0);
    }
    const double tau = sum / static_cast<double>(data.n());
    auto r = make_report(data, Estimand::ACE, tau, ace_variance(data, fit), alpha);
    r.method = "aipw";
    return r;
}

EstimateReport aipw_acet(const Dataset& data, const NuisanceFit& fit, double alpha) {
    check_alpha(alpha);
    data.validate_for_estimation();
    fit.validate(data.n());
    double sum = 0.0;
    for (std::size_t k = 0; k < data.n(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        // μ̂1 cancels out of ψ̂_{1,1}; any finite value gives the same term.
        const double psi11 = psi_acet(data.y[i], data.t[k], 0.0, fit.p[i], fit.p_marginal, 1, 1);
        const double psi01 =
            psi_acet(data.y[i], data.t[k], fit.mu0[i], fit.p[i], fit.p_marginal, 0, 1);
        sum += psi11 - psi01;
    }
    const double tau = sum / static_cast<double>(data.n());
    auto r = make_report(data, Estimand::ACET, tau, acet_variance(data, fit, tau), alpha);
    r.method = "aipw";
    return r;
}

double naive_diff(const Dataset& data) {
    data.validate_for_estimation();
    double s1 = 0.0, s0 = 0.0;
    for (std::size_t k = 0; k < data.n(); ++k)
        (data.t[k] == 1 ? s1 : s0) += data.y[static_cast<Eigen::Index>(k)];
    return s1 / static_cast<double>(data.n_treated()) - s0 / static_cast<double>(data.n_control());
}

EstimateReport naive_report(const Dataset& data, Estimand estimand, double alpha) {
    check_alpha(alpha);
    const double tau = naive_diff(data);
    const auto n1 = static_cast<double>(data.n_treated());
    const auto n0 = static_cast<double>(data.n_control());
    double m1 = 0.0, m0 = 0.0;
    for (std::size_t k = 0; k < data.n(); ++k)
        (data.t[k] == 1 ? m1 : m0) += data.y[static_cast<Eigen::Index>(k)];
    m1 /= n1;
    m0 /= n0;
    double ss1 = 0.0, ss0 = 0.0;
    for (std::size_t k = 0; k < data.n(); ++k) {
        const double y = data.y[static_cast<Eigen::Index>(k)];
        if (data.t[k] == 1) ss1 += (y - m1) * (y - m1);
        else ss0 += (y - m0) * (y - m0);
    }
    const double var1 = n1 > 1 ? ss1 / (n1 - 1) : 0.0;
    const double var0 = n0 > 1 ? ss0 / (n0 - 1) : 0.0;
    // Expressed on the sqrt(n) scale so that se = sqrt(variance / n).
    const double variance = static_cast<double>(data.n()) * (var1 / n1 + var0 / n0);
    auto r = make_report(data, estimand, tau, variance, alpha);
    r.method = "naive";
    return r;
}

double or_estimator(const Dataset& data, const NuisanceFit& fit, Estimand estimand) {
    data.validate_for_estimation();
    if (estimand == Estimand::ACE) {
        if (!fit.mu1) throw ConfigError("ACE requires a treated-arm outcome model (mu1)");
        return (*fit.mu1 - fit.mu0).mean();
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < data.n(); ++k) {
        if (data.t[k] != 1) continue;
        const auto i = static_cast<Eigen::Index>(k);
        sum += data.y[i] - fit.mu0[i];
    }
    return sum / static_cast<double>(data.n_treated());
}

EstimateReport or_report(const Dataset& data, const NuisanceFit& fit, Estimand estimand,
                         double alpha) {
    check_alpha(alpha);
    const double tau = or_estimator(data, fit, estimand);
    const double variance =
        estimand == Estimand::ACE ? ace_variance(data, fit) : acet_variance(data, fit, tau);
    auto r = make_report(data, estimand, tau, variance, alpha);
    r.method = "or";
    return r;
}

std::pair<double, double> confidence_interval(double tau, double variance, std::size_t n,
                                              double alpha) {
    if (!(variance >= 0.0)) throw DomainError("confidence_interval: variance must be >= 0");
    if (n == 0) throw DomainError("confidence_interval: n must be >= 1");
    check_alpha(alpha);
    const double half = std_normal_quantile(1.0 - alpha / 2.0) *
                        std::sqrt(variance / static_cast<double>(n));
    return {tau - half, tau + half};
}

}  // namespace cnncausal
