#include "cnncausal/lasso.hpp"

#include "cnncausal/errors.hpp"
#include "cnncausal/numeric.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cnncausal {
namespace {

using Index = Eigen::Index;

double softplus(double r) { return std::max(r, 0.0) + std::log1p(std::exp(-std::abs(r))); }

double soft_threshold(double z, double g) {
    if (z > g) return z - g;
    if (z < -g) return z + g;
    return 0.0;
}

void check_binary(const Vector& y, const char* who) {
    for (Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0)
            throw DomainError(std::string(who) + ": logistic response must be 0/1 (row " +
                              std::to_string(i) + ")");
}

double smooth_loss(LassoFamily family, const Vector& y, const Vector& eta) {
    const double n = static_cast<double>(y.size());
    double s = 0.0;
    if (family == LassoFamily::Gaussian) {
        for (Index i = 0; i < y.size(); ++i) s += (y[i] - eta[i]) * (y[i] - eta[i]);
        return s / (2.0 * n);
    }
    for (Index i = 0; i < y.size(); ++i) s += softplus(eta[i]) - y[i] * eta[i];
    return s / n;
}

double penalized(LassoFamily family, const Vector& y, const Vector& eta, const Vector& beta,
                 double lambda) {
    return smooth_loss(family, y, eta) + lambda * beta.lpNorm<1>();
}

// ∂L/∂η_i up to the 1/n factor: η − y (gaussian) or p − y (logistic).
Vector loss_gradient(LassoFamily family, const Vector& y, const Vector& eta) {
    Vector g(y.size());
    for (Index i = 0; i < y.size(); ++i)
        g[i] = (family == LassoFamily::Gaussian ? eta[i] : logistic(eta[i])) - y[i];
    return g;
}

// One coordinate-descent pass over `coords` (and the intercept) on the
// quadratic model  (1/(2n)) Σ w_i (z_i − Δη_i)² + λ‖β‖₁, where z is the
// working response for the step and Δη the move from the current point.
// Updates beta, intercept and z in place; returns the largest scaled move.
double quadratic_sweep(const Matrix& x, const Vector& w, Vector& z, Vector& beta, double& intercept,
                       double lambda, const std::vector<Index>& coords) {
    const double n = static_cast<double>(x.rows());
    double biggest = 0.0;
    {
        const double h0 = w.sum() / n;
        const double step = w.dot(z) / n / h0;
        intercept += step;
        z.array() -= step;
        biggest = std::max(biggest, h0 * std::abs(step));
    }
    for (Index j : coords) {
        const auto col = x.col(j);
        const double h = col.cwiseProduct(w).dot(col) / n;
        if (!(h > 0.0)) continue;
        const double old = beta[j];
        const double g = col.cwiseProduct(w).dot(z) / n + h * old;
        const double next = soft_threshold(g, lambda) / h;
        if (next != old) {
            z.noalias() -= (next - old) * col;
            beta[j] = next;
            biggest = std::max(biggest, h * std::abs(next - old));
        }
    }
    return biggest;
}

}  // namespace

// --- monomial basis --------------------------------------------------------

std::size_t MonomialBasis::full_size(std::size_t d) {
    return (d + 3) * (d + 2) * (d + 1) / 6 - 1;
}

MonomialBasis MonomialBasis::fit(const Matrix& x) {
    if (x.cols() < 1) throw StructuralError("monomial basis: need at least one covariate");
    if (x.rows() < 2) throw DataError("monomial basis: need at least two rows");
    MonomialBasis b;
    const Index d = x.cols();
    const double n = static_cast<double>(x.rows());
    for (Index j = 0; j < d; ++j) {
        const double m = x.col(j).mean();
        const double var = (x.col(j).array() - m).square().sum() / n;
        b.base_mean_.push_back(m);
        b.base_sd_.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
    }
    std::vector<Term> all;
    for (int a = 0; a < d; ++a) all.push_back({a, -1, -1});
    for (int a = 0; a < d; ++a)
        for (int c = a; c < d; ++c) all.push_back({a, c, -1});
    for (int a = 0; a < d; ++a)
        for (int c = a; c < d; ++c)
            for (int e = c; e < d; ++e) all.push_back({a, c, e});
    b.terms_ = all;

    const Matrix r = b.raw(x);
    std::vector<Term> kept;
    for (Index k = 0; k < r.cols(); ++k) {
        const double m = r.col(k).mean();
        const double var = (r.col(k).array() - m).square().sum() / n;
        if (!(var > 1e-24 * std::max(1.0, m * m))) {
            b.warnings_.push_back("monomial " + b.term_name(static_cast<std::size_t>(k)) +
                                  " is constant on the training rows and was dropped");
            continue;
        }
        kept.push_back(all[static_cast<std::size_t>(k)]);
        b.col_mean_.push_back(m);
        b.col_sd_.push_back(std::sqrt(var));
    }
    b.terms_ = std::move(kept);
    return b;
}

Matrix MonomialBasis::raw(const Matrix& x) const {
    const Index d = static_cast<Index>(base_mean_.size());
    Matrix z(x.rows(), d);
    for (Index j = 0; j < d; ++j)
        z.col(j) = (x.col(j).array() - base_mean_[j]) / base_sd_[j];
    Matrix out(x.rows(), static_cast<Index>(terms_.size()));
    for (std::size_t k = 0; k < terms_.size(); ++k) {
        auto col = out.col(static_cast<Index>(k));
        col = z.col(terms_[k][0]);
        for (int s = 1; s < 3; ++s)
            if (terms_[k][s] >= 0) col.array() *= z.col(terms_[k][s]).array();
    }
    return out;
}

Matrix MonomialBasis::transform(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != base_mean_.size())
        throw StructuralError("monomial basis: expected " + std::to_string(base_mean_.size()) +
                              " covariates, got " + std::to_string(x.cols()));
    Matrix out = raw(x);
    for (Index k = 0; k < out.cols(); ++k)
        out.col(k) = (out.col(k).array() - col_mean_[static_cast<std::size_t>(k)]) /
                     col_sd_[static_cast<std::size_t>(k)];
    return out;
}

std::string MonomialBasis::term_name(std::size_t k) const {
    const Term& t = terms_.at(k);
    std::ostringstream os;
    int i = 0;
    bool first = true;
    while (i < 3 && t[i] >= 0) {
        int power = 1;
        while (i + power < 3 && t[i + power] == t[i]) ++power;
        os << (first ? "" : "*") << 'x' << t[i] + 1;
        if (power > 1) os << '^' << power;
        first = false;
        i += power;
    }
    return os.str();
}

Matrix expand_monomials(const Matrix& x) { return MonomialBasis::fit(x).transform(x); }

// --- lasso -----------------------------------------------------------------

Vector LassoFit::link(const Matrix& x) const {
    if (x.cols() != beta.size())
        throw StructuralError("lasso: design has " + std::to_string(x.cols()) +
                              " columns, fit has " + std::to_string(beta.size()));
    Vector eta = x * beta;
    eta.array() += intercept;
    return eta;
}

double lasso_objective(const Matrix& x, const Vector& y, const LassoFit& fit) {
    return penalized(fit.family, y, fit.link(x), fit.beta, fit.lambda);
}

double kkt_violation(const Matrix& x, const Vector& y, const LassoFit& fit) {
    const Vector g = loss_gradient(fit.family, y, fit.link(x));
    const double n = static_cast<double>(x.rows());
    double worst = std::abs(g.sum() / n);
    for (Index j = 0; j < x.cols(); ++j) {
        const double gj = x.col(j).dot(g) / n;
        const double v = fit.beta[j] == 0.0
                             ? std::max(0.0, std::abs(gj) - fit.lambda)
                             : std::abs(gj + fit.lambda * (fit.beta[j] > 0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
    }
    return worst;
}

// At β = 0 the intercept fits the mean (η ≡ ȳ, or logit ȳ for the logistic
// family), so in both cases the gradient there is x'(ȳ − y)/n.
double lambda_max(const Matrix& x, const Vector& y, [[maybe_unused]] LassoFamily family) {
    const double n = static_cast<double>(x.rows());
    const Vector r = y.array() - y.mean();
    return (x.transpose() * r).cwiseAbs().maxCoeff() / n;
}

LassoFit lasso_fit(const Matrix& x, const Vector& y, LassoFamily family, double lambda,
                   const LassoOptions& options) {
    if (!(lambda >= 0.0)) throw DomainError("lasso: lambda must be >= 0");
    if (x.rows() != y.size()) throw StructuralError("lasso: x and y have different row counts");
    if (x.rows() == 0) throw DataError("lasso: no observations");
    if (family == LassoFamily::Logistic) check_binary(y, "lasso");

    const Index n = x.rows(), p = x.cols();
    LassoFit fit;
    fit.family = family;
    fit.lambda = lambda;
    fit.beta = Vector::Zero(p);
    if (family == LassoFamily::Gaussian) {
        fit.intercept = y.mean();
    } else {
        const double ybar = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
        fit.intercept = std::log(ybar / (1.0 - ybar));
    }

    Vector eta = Vector::Constant(n, fit.intercept);
    double objective = penalized(family, y, eta, fit.beta, lambda);
    fit.objective_trace.push_back(objective);

    std::vector<Index> all(static_cast<std::size_t>(p));
    std::iota(all.begin(), all.end(), Index{0});
    std::vector<Index> active;
    bool full_sweep = true;

    Vector w(n), z(n);
    for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        const auto& coords = full_sweep ? all : active;
        const Vector beta_before = fit.beta;
        const double intercept_before = fit.intercept;

        double moved = 0.0;
        if (family == LassoFamily::Gaussian) {
            w.setOnes();
            z = y - eta;
            moved = quadratic_sweep(x, w, z, fit.beta, fit.intercept, lambda, coords);
            eta = y - z;
        } else {
            // Reweighted step first; the 1/4 bound majorizes the loss, so
            // the fallback step cannot increase the objective.
            for (int attempt = 0; attempt < 2; ++attempt) {
                for (Index i = 0; i < n; ++i) {
                    const double pi = logistic(eta[i]);
                    w[i] = attempt == 0 ? std::max(pi * (1.0 - pi), 1e-6) : 0.25;
                    z[i] = (y[i] - pi) / w[i];
                }
                moved = quadratic_sweep(x, w, z, fit.beta, fit.intercept, lambda, coords);
                Vector trial = x * fit.beta;
                trial.array() += fit.intercept;
                const double f = penalized(family, y, trial, fit.beta, lambda);
                if (attempt == 1 || f <= objective) {
                    eta = std::move(trial);
                    break;
                }
                fit.beta = beta_before;
                fit.intercept = intercept_before;
            }
        }

        const double next = penalized(family, y, eta, fit.beta, lambda);
        const double change = objective - next;
        objective = next;
        fit.objective_trace.push_back(objective);
        fit.sweeps = sweep;

        const bool settled = std::abs(change) <= options.tolerance * std::max(1.0, std::abs(next)) &&
                             moved <= options.coordinate_tolerance;
        if (full_sweep) {
            std::vector<Index> now;
            for (Index j = 0; j < p; ++j)
                if (fit.beta[j] != 0.0) now.push_back(j);
            if (settled) break;
            active = std::move(now);
            full_sweep = active.empty();
        } else if (settled) {
            full_sweep = true;  // confirm on every coordinate before stopping
        }
    }
    if (fit.sweeps >= options.max_sweeps) {
        std::ostringstream os;
        os << "lasso did not converge in " << options.max_sweeps << " sweeps (lambda " << lambda
           << ", last objective " << objective << ", last change "
           << (fit.objective_trace.size() > 1
                   ? fit.objective_trace[fit.objective_trace.size() - 2] - objective
                   : 0.0)
           << ')';
        throw ConvergenceError(os.str());
    }
    for (Index j = 0; j < p; ++j)
        if (fit.beta[j] != 0.0) fit.selected.push_back(static_cast<std::size_t>(j));
    return fit;
}

double plugin_lambda(const Vector& y, std::size_t p, double c, double delta) {
    if (y.size() < 2) throw DataError("plugin lambda: need at least two observations");
    if (p < 1) throw DomainError("plugin lambda: need at least one regressor");
    if (!(c > 0.0) || !(delta > 0.0 && delta < 1.0))
        throw DomainError("plugin lambda: need c > 0 and delta in (0,1)");
    const double n = static_cast<double>(y.size());
    const double sd = std::sqrt((y.array() - y.mean()).square().sum() / (n - 1.0));
    return c * sd * std::sqrt(2.0 * std::log(2.0 * static_cast<double>(p) / delta) / n);
}

double cv_lambda(const Matrix& x, const Vector& y, LassoFamily family, std::size_t folds,
                 std::uint64_t seed, std::size_t path_length, const LassoOptions& options) {
    const Index n = x.rows();
    if (folds < 2 || static_cast<Index>(folds) > n)
        throw ConfigError("cross-validation: need 2 <= folds <= n");
    if (path_length < 2) throw ConfigError("cross-validation: path needs at least two values");

    std::vector<std::size_t> fold(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) fold[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i) % folds;
    Rng rng(seed);
    for (std::size_t i = fold.size(); i > 1; --i) std::swap(fold[i - 1], fold[rng.below(i)]);

    const double top = lambda_max(x, y, family);
    if (!(top > 0.0)) return 0.0;
    std::vector<double> path(path_length);
    for (std::size_t k = 0; k < path_length; ++k)
        path[k] = top * std::pow(1e-3, static_cast<double>(k) / static_cast<double>(path_length - 1));

    std::vector<double> loss(path_length, 0.0);
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<Index> train, test;
        for (Index i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        const Matrix xtr = x(train, Eigen::all), xte = x(test, Eigen::all);
        const Vector ytr = y(train), yte = y(test);
        for (std::size_t k = 0; k < path_length; ++k) {
            const LassoFit fit = lasso_fit(xtr, ytr, family, path[k], options);
            loss[k] += smooth_loss(family, yte, fit.link(xte)) * static_cast<double>(test.size());
        }
    }
    return path[static_cast<std::size_t>(std::min_element(loss.begin(), loss.end()) - loss.begin())];
}

// --- refits ----------------------------------------------------------------

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> refit_sets(
    Selection strategy, const std::vector<std::size_t>& outcome,
    const std::vector<std::size_t>& treatment) {
    if (strategy == Selection::Single) return {outcome, treatment};
    std::vector<std::size_t> a = outcome, b = treatment, u;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
    return {u, u};
}

namespace {

Matrix with_intercept(const Matrix& x, const std::vector<std::size_t>& columns) {
    Matrix d(x.rows(), static_cast<Index>(columns.size()) + 1);
    d.col(0).setOnes();
    for (std::size_t k = 0; k < columns.size(); ++k) {
        if (static_cast<Index>(columns[k]) >= x.cols())
            throw StructuralError("refit: column index out of range");
        d.col(static_cast<Index>(k) + 1) = x.col(static_cast<Index>(columns[k]));
    }
    return d;
}

constexpr double kRidge = 1e-8;

}  // namespace

std::pair<double, Vector> least_squares_refit(const Matrix& x, const Vector& y,
                                              const std::vector<std::size_t>& columns,
                                              std::vector<std::string>& warnings) {
    if (x.rows() == 0) throw DataError("least squares refit: no observations");
    const Matrix d = with_intercept(x, columns);
    Eigen::ColPivHouseholderQR<Matrix> qr(d);
    Vector coef;
    if (qr.rank() == d.cols()) {
        coef = qr.solve(y);
    } else {
        warnings.push_back("least squares refit: design of rank " + std::to_string(qr.rank()) +
                           " < " + std::to_string(d.cols()) + " columns, used a 1e-8 ridge");
        Matrix g = d.transpose() * d;
        g.diagonal().array() += kRidge;
        coef = g.ldlt().solve(d.transpose() * y);
    }
    return {coef[0], coef.tail(coef.size() - 1)};
}

std::pair<double, Vector> logistic_refit(const Matrix& x, const Vector& t,
                                         const std::vector<std::size_t>& columns,
                                         std::vector<std::string>& warnings) {
    if (x.rows() == 0) throw DataError("logistic refit: no observations");
    check_binary(t, "logistic refit");
    const Matrix d = with_intercept(x, columns);
    const Index k = d.cols();
    const double tbar = std::clamp(t.mean(), 1e-6, 1.0 - 1e-6);
    Vector coef = Vector::Zero(k);
    coef[0] = std::log(tbar / (1.0 - tbar));

    auto nll = [&](const Vector& c) {
        const Vector eta = d * c;
        double s = 0.0;
        for (Index i = 0; i < eta.size(); ++i) s += softplus(eta[i]) - t[i] * eta[i];
        return s;
    };
    double current = nll(coef);
    bool ridge = false, converged = false;
    for (int it = 0; it < 100; ++it) {
        const Vector eta = d * coef;
        Vector grad = Vector::Zero(k), w(eta.size());
        for (Index i = 0; i < eta.size(); ++i) {
            const double p = logistic(eta[i]);
            w[i] = p * (1.0 - p);
            grad += (p - t[i]) * d.row(i).transpose();
        }
        Matrix h = d.transpose() * w.asDiagonal() * d;
        Eigen::LDLT<Matrix> ldlt(h);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
            ridge = true;
            h.diagonal().array() += kRidge;
            ldlt.compute(h);
        }
        const Vector step = ldlt.solve(grad);
        double scale = 1.0, next = current;
        Vector trial = coef;
        for (int half = 0; half < 50; ++half) {
            trial = coef - scale * step;
            next = nll(trial);
            if (next <= current) break;
            scale *= 0.5;
        }
        if (!(next <= current)) break;
        const double gain = current - next;
        coef = trial;
        current = next;
        if (gain <= 1e-12 * std::max(1.0, current)) {
            converged = true;
            break;
        }
    }
    if (ridge)
        warnings.push_back("logistic refit: singular information matrix, used a 1e-8 ridge");
    if (!converged)
        warnings.push_back("logistic refit: Newton iterations did not settle (possible separation)");
    return {coef[0], coef.tail(k - 1)};
}

// --- selection + refit -----------------------------------------------------

PostLassoResult select_and_refit(const Dataset& data, const PostLassoConfig& cfg) {
    data.validate_for_estimation();
    if (!(cfg.trim > 0.0 && cfg.trim < 0.5)) throw ConfigError("post-lasso: trim must lie in (0, 0.5)");

    PostLassoResult res;
    res.basis = MonomialBasis::fit(data.x);
    res.warnings = res.basis.warnings();
    const Matrix z = res.basis.transform(data.x);
    const std::size_t p = res.basis.size();

    std::vector<Index> control, treated;
    for (std::size_t i = 0; i < data.n(); ++i) (data.t[i] ? treated : control).push_back(static_cast<Index>(i));
    const Matrix z0 = z(control, Eigen::all), z1 = z(treated, Eigen::all);
    const Vector y0 = data.y(control), y1 = data.y(treated);
    Vector t(static_cast<Index>(data.n()));
    for (std::size_t i = 0; i < data.n(); ++i) t[static_cast<Index>(i)] = data.t[i];

    auto choose = [&](const Matrix& x, const Vector& y, LassoFamily fam) {
        if (cfg.rule == LambdaRule::PlugIn) return plugin_lambda(y, p, cfg.c, cfg.delta);
        return cv_lambda(x, y, fam, cfg.folds, cfg.seed, 30, cfg.lasso);
    };
    auto select = [&](const Matrix& x, const Vector& y, LassoFamily fam, double& lambda) {
        if (x.rows() < 2) {
            res.warnings.push_back("post-lasso: fewer than two rows for a selection step, nothing selected");
            return std::vector<std::size_t>{};
        }
        lambda = choose(x, y, fam);
        return lasso_fit(x, y, fam, lambda, cfg.lasso).selected;
    };

    res.outcome_selected = select(z0, y0, LassoFamily::Gaussian, res.lambda_outcome);
    res.treatment_selected = select(z, t, LassoFamily::Logistic, res.lambda_treatment);
    double lambda1 = 0.0;
    if (cfg.fit_mu1) res.outcome1_selected = select(z1, y1, LassoFamily::Gaussian, lambda1);

    std::vector<std::size_t> outcome_all = res.outcome_selected;
    if (cfg.fit_mu1 && cfg.strategy == Selection::Double)
        outcome_all.insert(outcome_all.end(), res.outcome1_selected.begin(), res.outcome1_selected.end());
    auto [out_cols, treat_cols] = refit_sets(cfg.strategy, outcome_all, res.treatment_selected);
    res.outcome_used = out_cols;
    res.treatment_used = treat_cols;

    auto predict = [&](double b0, const Vector& b, const std::vector<std::size_t>& cols) {
        Vector eta = Vector::Constant(z.rows(), b0);
        for (std::size_t k = 0; k < cols.size(); ++k) eta += b[static_cast<Index>(k)] * z.col(static_cast<Index>(cols[k]));
        return eta;
    };

    auto [a0, c0] = least_squares_refit(z0, y0, out_cols, res.warnings);
    Vector mu0 = predict(a0, c0, out_cols);

    std::optional<Vector> mu1;
    if (cfg.fit_mu1) {
        const auto& cols1 = cfg.strategy == Selection::Double ? out_cols : res.outcome1_selected;
        auto [a1, c1] = least_squares_refit(z1, y1, cols1, res.warnings);
        mu1 = predict(a1, c1, cols1);
    }

    auto [b0, cb] = logistic_refit(z, t, treat_cols, res.warnings);
    Vector eta = predict(b0, cb, treat_cols);
    Vector ps(eta.size());
    for (Index i = 0; i < eta.size(); ++i) ps[i] = std::clamp(logistic(eta[i]), cfg.trim, 1.0 - cfg.trim);

    res.fit = NuisanceFit::from(data, std::move(mu0), std::move(mu1), std::move(ps));
    return res;
}

}  // namespace cnncausal
