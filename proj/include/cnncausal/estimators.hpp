#pragma once

#include "cnncausal/dataset.hpp"

#include <optional>
#include <string>
#include <utility>

namespace cnncausal {

enum class Estimand { ACE, ACET };

std::string to_string(Estimand e);
Estimand parse_estimand(const std::string& s);

/// Per-observation nuisance predictions consumed by the estimators.
/// `p` is P̂[T=1 | X=x_i]; `p_marginal` is P̂[T=1] = n1/n.
struct NuisanceFit {
    Vector mu0;
    std::optional<Vector> mu1;
    Vector p;
    double p_marginal = 0.5;

    // Sets p_marginal from the treatment vector.
    static NuisanceFit from(const Dataset& data, Vector mu0, std::optional<Vector> mu1, Vector p);

    // Finite values, lengths equal to n, p and p_marginal in (0,1).
    void validate(std::size_t n) const;
};

struct EstimateReport {
    Estimand estimand = Estimand::ACET;
    std::string method;
    double tau_hat = 0.0;
    double variance = 0.0;  // V̂ or V̂_t, on the sqrt(n) scale
    double se = 0.0;        // sqrt(variance / n)
    double alpha = 0.05;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n = 0;
    std::size_t n1 = 0;
    std::size_t n0 = 0;
};

/// 1{t_i=t}(y_i − μ̂_t)/P̂[T=t|x_i] + μ̂_t. `p_t` is P̂[T=t|x_i].
double psi_ace(double y, int t_i, double mu_t, double p_t, int t);

/// ψ̂_{t,t'}(z_i) =
///   (P̂[T=t'|x_i] / P̂[T=t']) · 1{t_i=t}(y_i − μ̂_t(x_i)) / P̂[T=t|x_i]
///   + 1{t_i=t'} μ̂_t(x_i) / P̂[T=t'].
/// `p_treat` is P̂[T=1|x_i]; the arm-specific probabilities are derived from it.
/// `p_marginal` is P̂[T=t'].
double psi_acet(double y, int t_i, double mu_t, double p_treat, double p_marginal, int t,
                int t_prime);

/// τ̂ = E_n[ψ̂_1 − ψ̂_0] with the four-term influence-function variance
///   V̂ = E_n[1(t=1)(y−μ̂1)²/p̂²] + E_n[(μ̂1 − E_nψ̂_1)²]
///     + E_n[1(t=0)(y−μ̂0)²/(1−p̂)²] + E_n[(μ̂0 − E_nψ̂_0)²].
/// Throws ConfigError when fit.mu1 is absent.
EstimateReport aipw_ace(const Dataset& data, const NuisanceFit& fit, double alpha);

/// τ̂_t = E_n[ψ̂_{1,1} − ψ̂_{0,1}] with
///   V̂_t = (n/n1)² E_n[1(t=1)(y−μ̂0−τ̂_t)²] + (n/n1)² E_n[(p̂/(1−p̂))² 1(t=0)(y−μ̂0)²].
EstimateReport aipw_acet(const Dataset& data, const NuisanceFit& fit, double alpha);

/// V̂ and V̂_t as standalone quantities. `acet_variance` centers treated
/// residuals at `tau`, which lets OR estimates reuse the same variance.
double ace_variance(const Dataset& data, const NuisanceFit& fit);
double acet_variance(const Dataset& data, const NuisanceFit& fit, double tau);

/// mean(y | t=1) − mean(y | t=0).
double naive_diff(const Dataset& data);
/// naive_diff with a Welch (unequal-variance) standard error. The estimand
/// only labels the report; the difference in means is the same for both.
EstimateReport naive_report(const Dataset& data, Estimand estimand, double alpha);

/// Outcome-regression estimator.
///   ACE:  E_n[μ̂1(x_i) − μ̂0(x_i)]
///   ACET: (1/n1) Σ_{t_i=1} (y_i − μ̂0(x_i))
double or_estimator(const Dataset& data, const NuisanceFit& fit, Estimand estimand);
/// OR point estimate with the influence-function variance of the matching AIPW estimator.
EstimateReport or_report(const Dataset& data, const NuisanceFit& fit, Estimand estimand,
                         double alpha);

/// tau ± Φ⁻¹(1−α/2)·sqrt(variance/n).
std::pair<double, double> confidence_interval(double tau, double variance, std::size_t n,
                                              double alpha);

}  // namespace cnncausal
