#pragma once

#include "cnncausal/dataset.hpp"
#include "cnncausal/estimators.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cnncausal {

/// All monomials of total degree 1..3 in the d base covariates, cross
/// products included: C(d+3,3) − 1 terms. Base covariates are centred and
/// scaled before the powers are taken (raw values near 100 would make x, x²
/// and x³ numerically collinear); every resulting column is then
/// standardized to mean 0 and sd 1. Columns that are constant on the
/// training rows are dropped and a warning is recorded.
class MonomialBasis {
public:
    // Exponents of one term: base-covariate indices, -1 for unused slots.
    using Term = std::array<int, 3>;

    static MonomialBasis fit(const Matrix& x);
    Matrix transform(const Matrix& x) const;

    std::size_t input_dim() const noexcept { return base_mean_.size(); }
    std::size_t size() const noexcept { return terms_.size(); }
    const std::vector<Term>& terms() const noexcept { return terms_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    // "x1", "x1*x3", "x2^3", ...
    std::string term_name(std::size_t k) const;

    // C(d+3,3) − 1.
    static std::size_t full_size(std::size_t d);

private:
    Matrix raw(const Matrix& x) const;

    std::vector<double> base_mean_, base_sd_;
    std::vector<Term> terms_;
    std::vector<double> col_mean_, col_sd_;
    std::vector<std::string> warnings_;
};

/// Expanded and standardized design for x (fits the basis on x itself).
Matrix expand_monomials(const Matrix& x);

enum class LassoFamily { Gaussian, Logistic };

struct LassoOptions {
    // Stop when the objective changes by less than tolerance·max(1, |F|)
    // over a sweep and no coordinate moves its scaled gradient by more than
    // coordinate_tolerance.
    double tolerance = 1e-9;
    double coordinate_tolerance = 1e-8;
    int max_sweeps = 20000;
};

struct LassoFit {
    LassoFamily family = LassoFamily::Gaussian;
    double lambda = 0.0;
    double intercept = 0.0;
    Vector beta;
    std::vector<std::size_t> selected;  // indices with beta != 0, ascending
    int sweeps = 0;
    std::vector<double> objective_trace;  // objective after each sweep, trace[0] at the start

    // Linear predictor (the logit for the logistic family).
    Vector link(const Matrix& x) const;
};

/// Minimizes L(b0, β) + λ‖β‖₁ by cyclic coordinate descent, with
///   gaussian: L = (1/(2n)) Σ (y_i − b0 − x_i'β)²
///   logistic: L = (1/n) Σ [ln(1 + e^{η_i}) − y_i η_i],  η_i = b0 + x_i'β.
/// The intercept is not penalized. The logistic family takes a
/// reweighted quadratic step per sweep and falls back to the 1/4 curvature
/// bound whenever that step would raise the objective, so the trace never
/// increases. Throws ConvergenceError when max_sweeps is reached, DomainError
/// for λ < 0 or a non-binary logistic response.
LassoFit lasso_fit(const Matrix& x, const Vector& y, LassoFamily family, double lambda,
                   const LassoOptions& options = {});

double lasso_objective(const Matrix& x, const Vector& y, const LassoFit& fit);

/// Largest violation of the optimality conditions, intercept included:
/// |∇_j L| − λ for zero coefficients, |∇_j L + λ·sign β_j| otherwise.
double kkt_violation(const Matrix& x, const Vector& y, const LassoFit& fit);

/// Smallest λ at which every coefficient is zero.
double lambda_max(const Matrix& x, const Vector& y, LassoFamily family);

/// c · sd(y) · sqrt(2 ln(2p/δ) / n).
double plugin_lambda(const Vector& y, std::size_t p, double c = 1.1, double delta = 0.05);

/// K-fold cross-validation over a log-spaced path from lambda_max down to
/// 1e-3·lambda_max; returns the λ with the smallest mean held-out loss.
double cv_lambda(const Matrix& x, const Vector& y, LassoFamily family, std::size_t folds,
                 std::uint64_t seed, std::size_t path_length = 30,
                 const LassoOptions& options = {});

enum class Selection { Single, Double };
enum class LambdaRule { PlugIn, CrossValidation };

struct PostLassoConfig {
    Selection strategy = Selection::Double;
    LambdaRule rule = LambdaRule::PlugIn;
    double c = 1.1;
    double delta = 0.05;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    double trim = 0.01;
    // Also select and refit μ̂1 on the treated rows (needed for ACE).
    bool fit_mu1 = false;
    LassoOptions lasso;
};

struct PostLassoResult {
    NuisanceFit fit;
    MonomialBasis basis;
    std::vector<std::size_t> outcome_selected;    // lasso of y on controls
    std::vector<std::size_t> outcome1_selected;   // lasso of y on treated (fit_mu1 only)
    std::vector<std::size_t> treatment_selected;  // logistic lasso of t on all rows
    std::vector<std::size_t> outcome_used;        // columns in the μ̂ refits
    std::vector<std::size_t> treatment_used;      // columns in the p̂ refit
    double lambda_outcome = 0.0, lambda_treatment = 0.0;
    std::vector<std::string> warnings;
};

/// Columns each refit uses. Single: each model keeps its own selection.
/// Double: both use the sorted union.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> refit_sets(
    Selection strategy, const std::vector<std::size_t>& outcome,
    const std::vector<std::size_t>& treatment);

/// Unpenalized least squares of y on an intercept and the given columns.
/// Falls back to a 1e-8 ridge when the design is rank deficient and appends
/// a warning. Returns (intercept, coefficients).
std::pair<double, Vector> least_squares_refit(const Matrix& x, const Vector& y,
                                              const std::vector<std::size_t>& columns,
                                              std::vector<std::string>& warnings);

/// Logistic maximum likelihood (Newton with step halving) on an intercept
/// and the given columns. Same ridge fallback as least_squares_refit.
std::pair<double, Vector> logistic_refit(const Matrix& x, const Vector& t,
                                         const std::vector<std::size_t>& columns,
                                         std::vector<std::string>& warnings);

/// Post-lasso nuisances: monomial expansion of data.x, an outcome lasso on
/// the controls, a logistic treatment lasso on every row, then refits on the
/// selected columns (μ̂0 by least squares on controls, p̂ by logistic MLE on
/// all rows, trimmed to [trim, 1 − trim]).
PostLassoResult select_and_refit(const Dataset& data, const PostLassoConfig& cfg);

}  // namespace cnncausal
