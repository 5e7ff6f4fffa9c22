#include "cnncausal/errors.hpp"
#include "cnncausal/estimators.hpp"
#include "cnncausal/numeric.hpp"

#include <doctest.h>

#include <cmath>

using namespace cnncausal;

namespace {

Dataset make(std::initializer_list<double> y, std::initializer_list<int> t) {
    Dataset d;
    d.y = Vector::Map(std::data(y), static_cast<Eigen::Index>(y.size()));
    d.t.assign(t);
    d.x = Matrix::Zero(d.y.size(), 1);
    return d;
}

Vector vec(std::initializer_list<double> v) {
    return Vector::Map(std::data(v), static_cast<Eigen::Index>(v.size()));
}

// Random data with nuisances that are deliberately a little off.
struct Random {
    Dataset data;
    NuisanceFit fit;
};

Random random_problem(Rng& rng, std::size_t n) {
    Random r;
    r.data.y.resize(n);
    r.data.t.resize(n);
    r.data.x = Matrix::Zero(n, 1);
    Vector mu0(n), mu1(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = 0.05 + 0.9 * rng.uniform();
        r.data.t[i] = sample_bernoulli(rng, p[i]);
        mu0[i] = sample_normal(rng, 0, 2);
        mu1[i] = mu0[i] + sample_normal(rng, 1, 1);
        r.data.y[i] = (r.data.t[i] ? mu1[i] : mu0[i]) + sample_normal(rng, 0, 1);
    }
    r.data.t[0] = 1;
    r.data.t[1] = 0;
    r.fit = NuisanceFit::from(r.data, mu0, mu1, p);
    return r;
}

// Straight transcription of the four-term V̂, written independently of the library.
double ace_variance_oracle(const Dataset& d, const NuisanceFit& f) {
    const double n = static_cast<double>(d.n());
    double e1 = 0, e0 = 0;
    for (std::size_t i = 0; i < d.n(); ++i) {
        const double y = d.y[i], p = f.p[i], m1 = (*f.mu1)[i], m0 = f.mu0[i];
        e1 += (d.t[i] == 1 ? (y - m1) / p : 0.0) + m1;
        e0 += (d.t[i] == 0 ? (y - m0) / (1 - p) : 0.0) + m0;
    }
    e1 /= n;
    e0 /= n;
    double v = 0;
    for (std::size_t i = 0; i < d.n(); ++i) {
        const double y = d.y[i], p = f.p[i], m1 = (*f.mu1)[i], m0 = f.mu0[i];
        if (d.t[i] == 1) v += (y - m1) * (y - m1) / (p * p);
        else v += (y - m0) * (y - m0) / ((1 - p) * (1 - p));
        v += (m1 - e1) * (m1 - e1) + (m0 - e0) * (m0 - e0);
    }
    return v / n;
}

}  // namespace

TEST_CASE("psi for the average effect") {
    CHECK(psi_ace(2, 1, 1, 0.5, 1) == 3.0);
    CHECK(psi_ace(123.0, 0, 0.7, 0.4, 1) == 0.7);
    CHECK(psi_ace(0.25, 1, 0.25, 0.3, 1) == 0.25);
    CHECK_THROWS_AS(psi_ace(1, 1, 0, 0.0, 1), DomainError);
    CHECK_THROWS_AS(psi_ace(1, 1, 0, 1.0, 1), DomainError);
}

TEST_CASE("psi for the effect on the treated") {
    // ψ_{1,1}: y / P[T=1] whatever μ̂1 and p̂ are.
    CHECK(psi_acet(2, 1, 0.3, 0.8, 0.5, 1, 1) == doctest::Approx(4.0).epsilon(1e-15));
    // ψ_{0,1} at a treated point: μ̂0 / P[T=1].
    CHECK(psi_acet(2, 1, 0.5, 0.5, 0.5, 0, 1) == 1.0);
    // ψ_{0,1} at a control point.
    CHECK(psi_acet(1, 0, 0.5, 0.5, 0.5, 0, 1) == 1.0);
    CHECK_THROWS_AS(psi_acet(1, 0, 0.5, 1.0, 0.5, 0, 1), DomainError);
    CHECK_THROWS_AS(psi_acet(1, 0, 0.5, 0.5, 0.0, 0, 1), DomainError);
}

TEST_CASE("psi_11 reduces to y / P[T=1]") {
    Rng rng(17);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double y = sample_normal(rng, 0, 3), mu = sample_normal(rng, 0, 3);
        const double p = 0.01 + 0.98 * rng.uniform(), pm = 0.05 + 0.9 * rng.uniform();
        const int t = sample_bernoulli(rng, 0.5);
        const double expect = t == 1 ? y / pm : 0.0;
        worst = std::max(worst, std::abs(psi_acet(y, t, mu, p, pm, 1, 1) - expect));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("AIPW average effect examples") {
    auto d = make({1, 0}, {1, 0});
    auto r = aipw_ace(d, NuisanceFit::from(d, vec({0, 0}), vec({1, 1}), vec({0.5, 0.5})), 0.05);
    CHECK(r.tau_hat == 1.0);

    auto d2 = make({2, 0}, {1, 0});
    auto fit = NuisanceFit::from(d2, vec({0, 0.5}), vec({1, 1}), vec({0.5, 0.25}));
    auto r2 = aipw_ace(d2, fit, 0.05);
    CHECK(std::abs(r2.tau_hat - 25.0 / 12.0) < 1e-12);
    // 2 + 1 + 2/9 + 25/144, worked by hand from the four terms.
    CHECK(std::abs(r2.variance - (3.0 + 2.0 / 9.0 + 25.0 / 144.0)) < 1e-12);
    CHECK(r2.n == 2);
    CHECK(r2.n1 == 1);
    CHECK(r2.n0 == 1);
    CHECK(r2.estimand == Estimand::ACE);

    auto d3 = make({0.5, 0.5, 2}, {1, 0, 1});
    auto same = vec({0.5, 0.5, 2});
    CHECK(aipw_ace(d3, NuisanceFit::from(d3, same, same, vec({0.3, 0.6, 0.9})), 0.05).tau_hat == 0.0);

    CHECK_THROWS_AS(aipw_ace(d2, NuisanceFit::from(d2, vec({0, 0.5}), std::nullopt, vec({0.5, 0.25})), 0.05),
                    ConfigError);
}

TEST_CASE("AIPW effect on the treated examples") {
    auto d = make({2, 1}, {1, 0});
    auto fit = NuisanceFit::from(d, vec({0.5, 0.5}), std::nullopt, vec({0.5, 0.5}));
    CHECK(fit.p_marginal == 0.5);
    auto r = aipw_acet(d, fit, 0.05);
    CHECK(std::abs(r.tau_hat - 1.0) < 1e-12);
    CHECK(std::abs(r.variance - 1.0) < 1e-12);
    CHECK(r.estimand == Estimand::ACET);

    // Zero residuals everywhere.
    auto d2 = make({1.5, 2.5, 0, 1}, {1, 1, 0, 0});
    auto fit2 = NuisanceFit::from(d2, vec({1, 2, 0, 1}), std::nullopt, vec({0.4, 0.4, 0.4, 0.4}));
    auto r2 = aipw_acet(d2, fit2, 0.05);
    CHECK(std::abs(r2.tau_hat - 0.5) < 1e-12);
    CHECK(std::abs(r2.variance) < 1e-24);

    auto all_control = make({1, 2}, {0, 0});
    CHECK_THROWS_AS(aipw_acet(all_control, NuisanceFit{vec({0, 0}), std::nullopt, vec({0.5, 0.5}), 0.5}, 0.05),
                    DataError);
    auto bad = fit;
    bad.p[0] = 1.0;
    CHECK_THROWS_AS(aipw_acet(d, bad, 0.05), DomainError);
}

TEST_CASE("variance matches an independent transcription") {
    Rng rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        auto [data, fit] = random_problem(rng, 50 + rng.below(200));
        const double v = aipw_ace(data, fit, 0.05).variance;
        CHECK(std::abs(v - ace_variance_oracle(data, fit)) <= 1e-10 * std::max(1.0, v));

        const double tau = aipw_acet(data, fit, 0.05).tau_hat;
        const double n = double(data.n()), n1 = double(data.n_treated());
        double a = 0, b = 0;
        for (std::size_t i = 0; i < data.n(); ++i) {
            const double r = data.y[i] - fit.mu0[i], w = fit.p[i] / (1 - fit.p[i]);
            if (data.t[i] == 1) a += (r - tau) * (r - tau);
            else b += w * w * r * r;
        }
        const double vt = (n / n1) * (n / n1) * (a + b) / n;
        CHECK(std::abs(acet_variance(data, fit, tau) - vt) <= 1e-10 * std::max(1.0, vt));
    }
}

TEST_CASE("ACET estimate ignores p-hat at treated rows") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        auto [data, fit] = random_problem(rng, 300);
        const double before = aipw_acet(data, fit, 0.05).tau_hat;
        auto moved = fit;
        for (std::size_t i = 0; i < data.n(); ++i)
            if (data.t[i] == 1) moved.p[i] = 0.02 + 0.96 * rng.uniform();
        CHECK(std::abs(aipw_acet(data, moved, 0.05).tau_hat - before) <= 1e-12);
    }
}

TEST_CASE("variances are non-negative") {
    Rng rng(6);
    for (int rep = 0; rep < 200; ++rep) {
        auto [data, fit] = random_problem(rng, 2 + rng.below(40));
        CHECK(aipw_ace(data, fit, 0.1).variance >= 0.0);
        CHECK(aipw_acet(data, fit, 0.1).variance >= 0.0);
    }
}

TEST_CASE("zero residuals reduce AIPW to outcome regression") {
    Rng rng(7);
    auto [data, fit] = random_problem(rng, 400);
    for (std::size_t i = 0; i < data.n(); ++i) data.y[i] = data.t[i] ? (*fit.mu1)[i] : fit.mu0[i];
    CHECK(std::abs(aipw_ace(data, fit, 0.05).tau_hat - or_estimator(data, fit, Estimand::ACE)) <= 1e-13);
}

TEST_CASE("outcome regression and naive comparators") {
    auto d = make({2, 1}, {1, 0});
    auto fit = NuisanceFit::from(d, vec({0.5, 0.5}), std::nullopt, vec({0.5, 0.5}));
    CHECK(or_estimator(d, fit, Estimand::ACET) == 1.5);
    CHECK_THROWS_AS(or_estimator(d, fit, Estimand::ACE), ConfigError);

    auto d2 = make({3, 4, 0, 9}, {1, 1, 0, 0});
    auto fit2 = NuisanceFit::from(d2, vec({1, 2, 5, 5}), vec({1, 2, 5, 5}), vec({0.5, 0.5, 0.5, 0.5}));
    CHECK(or_estimator(d2, fit2, Estimand::ACET) == 2.0);
    CHECK(or_estimator(d2, fit2, Estimand::ACE) == 0.0);
    auto rep = or_report(d2, fit2, Estimand::ACET, 0.05);
    CHECK(rep.tau_hat == 2.0);
    CHECK(rep.variance == doctest::Approx(acet_variance(d2, fit2, 2.0)));

    CHECK(naive_diff(make({2, 1}, {1, 0})) == 1.0);
    CHECK(naive_diff(make({5, 5, 5, 5}, {1, 0, 1, 0})) == 0.0);
    CHECK(naive_diff(make({3, 1, 2, 0}, {1, 1, 0, 0})) == 1.0);
    CHECK_THROWS_AS(naive_diff(make({1, 2}, {1, 1})), DataError);

    // Welch: var1 = var0 = 2, se² = 2/2 + 2/2 = 2.
    auto nr = naive_report(make({3, 1, 2, 0}, {1, 1, 0, 0}), Estimand::ACE, 0.05);
    CHECK(std::abs(nr.se - std::sqrt(2.0)) < 1e-12);
    CHECK(nr.estimand == Estimand::ACE);
}

TEST_CASE("confidence interval examples") {
    CHECK(confidence_interval(0.7, 0.0, 10, 0.05) == std::pair(0.7, 0.7));
    auto [lo, hi] = confidence_interval(1, 1, 100, 0.05);
    CHECK(std::abs(lo - 0.8040036015459946) < 1e-12);
    CHECK(std::abs(hi - 1.1959963984540054) < 1e-12);
    auto [l2, h2] = confidence_interval(0, 4, 16, 0.32);
    CHECK(std::abs(h2 - 0.994457883209753 * 0.5) < 1e-9);
    CHECK(std::abs(l2 + h2) < 1e-15);
    CHECK_THROWS_AS(confidence_interval(0, -1e-9, 10, 0.05), DomainError);
    CHECK_THROWS_AS(confidence_interval(0, 1, 10, 0.0), DomainError);
    CHECK_THROWS_AS(confidence_interval(0, 1, 10, 1.0), DomainError);
}

TEST_CASE("intervals nest as alpha shrinks") {
    Rng rng(8);
    for (int i = 0; i < 1000; ++i) {
        const double tau = sample_normal(rng, 0, 5), v = 10 * rng.uniform();
        const double a = 0.001 + 0.998 * rng.uniform(), b = 0.001 + 0.998 * rng.uniform();
        const double small = std::min(a, b), big = std::max(a, b);
        auto wide = confidence_interval(tau, v, 50, small);
        auto narrow = confidence_interval(tau, v, 50, big);
        CHECK(wide.first <= narrow.first);
        CHECK(wide.second >= narrow.second);
    }
}

TEST_CASE("report intervals are centred on the estimate") {
    Rng rng(9);
    auto [data, fit] = random_problem(rng, 100);
    for (auto r : {aipw_ace(data, fit, 0.1), aipw_acet(data, fit, 0.1)}) {
        CHECK(r.ci_low <= r.tau_hat);
        CHECK(r.tau_hat <= r.ci_high);
        CHECK(std::abs(r.se - std::sqrt(r.variance / r.n)) < 1e-15);
        const double z = std_normal_quantile(0.95);
        CHECK(std::abs(r.ci_high - (r.tau_hat + z * r.se)) < 1e-12);
        CHECK(std::abs(r.ci_low - (r.tau_hat - z * r.se)) < 1e-12);
    }
    CHECK(parse_estimand("ACET") == Estimand::ACET);
    CHECK(parse_estimand("ace") == Estimand::ACE);
    CHECK_THROWS_AS(parse_estimand("att"), ConfigError);
}
