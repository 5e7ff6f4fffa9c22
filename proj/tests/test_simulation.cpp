#include "cnncausal/errors.hpp"
#include "cnncausal/simulation.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace cnncausal;
using namespace cnncausal::sim;

namespace {

// E[D] in closed form: for U ~ N(m, s²), E[U²] = m² + s² and E[U³] = m³ + 3ms²,
// with each neighbour difference having m = mean gap and s² = sum of variances.
double setting1_expected_signal() {
    auto sq = [](int a, int b) {
        const double m = kMeans[b] - kMeans[a], v = kSds[a] * kSds[a] + kSds[b] * kSds[b];
        return m * m + v;
    };
    auto cube = [](int a, int b) {
        const double m = kMeans[b] - kMeans[a], v = kSds[a] * kSds[a] + kSds[b] * kSds[b];
        return m * m * m + 3 * m * v;
    };
    return sq(0, 1) + cube(2, 3) + sq(4, 5) + cube(6, 7) + sq(8, 9);
}

McConfig small_config(std::vector<NamedEstimator> estimators, std::size_t reps = 6) {
    McConfig cfg;
    cfg.n = 200;
    cfg.reps = reps;
    cfg.seed = 5;
    cfg.oracle_mc_size = 200000;
    cfg.estimators = std::move(estimators);
    return cfg;
}

}  // namespace

TEST_CASE("covariate law") {
    Rng a(1), b(1);
    Matrix x = gen_covariates(a, 100000);
    CHECK(x.rows() == 100000);
    CHECK(x.cols() == 10);
    CHECK(std::abs(x.col(4).mean() - 109.0) < 0.11);
    for (int j = 0; j < 10; ++j) {
        const double m = x.col(j).mean();
        const double sd = std::sqrt((x.col(j).array() - m).square().sum() / (x.rows() - 1));
        CHECK(std::abs(m - kMeans[j]) < 4 * kSds[j] / std::sqrt(1e5));
        CHECK(std::abs(sd / kSds[j] - 1) < 0.02);
    }
    CHECK(gen_covariates(b, 100000) == x);
}

TEST_CASE("setting 1 structure") {
    double equal[10];
    for (double& v : equal) v = 100;
    CHECK(setting1_signal(equal) == 0.0);
    CHECK(setting1_expected_signal() == 6604.0);

    Rng rng(2);
    auto s = dgp_setting1(rng, 3000);
    CHECK(s.data.n() == 3000);
    for (Eigen::Index i = 0; i < 3000; ++i) {
        const int t = s.data.t[static_cast<std::size_t>(i)];
        CHECK(s.data.y[i] == (t ? s.y1[i] : s.y0[i]));
        CHECK(std::abs(s.mu0_true[i] + s.mu1_true[i] - 3.0) < 1e-9);
        CHECK(s.p_true[i] > 0.0);
        CHECK(s.p_true[i] < 1.0);
        const double d = setting1_signal(s.data.x.row(i).eval().data());
        CHECK(s.p_true[i] == doctest::Approx(1 / (1 + std::exp(5e-6 * d))));
    }
}

TEST_CASE("setting 2 step rules") {
    CHECK(step_rise(1, 2, 3, 4) == 10.0);
    CHECK(step_rise(1, 1.2, 1.3, 2) == 0.0);
    CHECK(step_flat(1, 1, 1, 1) == 5.0);
    CHECK(step_flat(1, 1.06, 1.06, 1.06) == 0.0);
    CHECK(step_zigzag(1, 1, 1, 1) == 3.0);
    CHECK(step_zigzag(1, 2, 1, 2) == 3.0);   // up, down, up: (+)(−)(+) < 0
    CHECK(step_zigzag(1, 2, 3, 4) == 0.0);   // steady climb by more than 1.1: all positive

    Rng rng(3);
    auto s = dgp_setting2(rng, 20000);
    const std::set<double> allowed{0, 3, 5, 8, 10, 13, 15, 18};
    std::set<double> seen;
    for (Eigen::Index i = 0; i < s.data.x.rows(); ++i) {
        const Eigen::RowVectorXd row = s.data.x.row(i);
        const double g = setting2_signal(row.data());
        CHECK(allowed.count(g) == 1);
        seen.insert(g);
        CHECK(s.mu0_true[i] == 1 + g);
        CHECK(s.mu1_true[i] == 2 - g);
        CHECK(s.data.y[i] == (s.data.t[static_cast<std::size_t>(i)] ? s.y1[i] : s.y0[i]));
    }
    CHECK(seen.size() >= 3);
}

TEST_CASE("true effect oracle") {
    const auto big = true_effect_oracle(1, Estimand::ACE, 1'000'000, 9);
    const double exact = 1 - 0.002 * setting1_expected_signal();
    CHECK(std::abs(big.value - exact) <= 4 * big.std_error);

    const auto half = true_effect_oracle(1, Estimand::ACE, 500'000, 9);
    const double ratio = half.std_error / big.std_error;
    CHECK(std::abs(ratio - std::sqrt(2.0)) < 0.1);

    CHECK(true_effect_oracle(1, Estimand::ACET, 100'000, 4).value ==
          true_effect_oracle(1, Estimand::ACET, 100'000, 4).value);
    CHECK_THROWS_AS(true_effect_oracle(3, Estimand::ACE, 1000, 1), ConfigError);
}

TEST_CASE("treatment prevalence matches the mean propensity") {
    Rng rng(4);
    auto big = simulate(1, rng, 1'000'000);
    const double mean_p = big.p_true.mean();
    auto s = simulate(1, rng, 100'000);
    const double share = double(s.data.n_treated()) / 1e5;
    CHECK(std::abs(share - mean_p) <= 0.02);
}

TEST_CASE("naive-only runs never train a network") {
    auto cfg = small_config({builtin(EstimatorKind::Naive)});
    cfg.pipeline.nn.train.batch_size = 0;  // any training attempt would throw ConfigError
    auto rep = monte_carlo_run(cfg);
    REQUIRE(rep.estimators.size() == 1);
    CHECK(rep.estimators[0].completed == 6);
    CHECK(rep.estimators[0].failed == 0);
}

TEST_CASE("report identities") {
    auto rep = monte_carlo_run(small_config({builtin(EstimatorKind::Naive), oracle_aipw()}));
    for (const auto& e : rep.estimators) {
        CHECK(std::abs(e.mse - (e.bias * e.bias + e.mc_sd * e.mc_sd)) <= 1e-10);
        CHECK(e.coverage >= 0.0);
        CHECK(e.coverage <= 1.0);
        CHECK(e.est_sd > 0.0);
    }
    auto one = monte_carlo_run(small_config({oracle_aipw()}, 1));
    const auto& e = one.estimators[0];
    CHECK(std::isnan(e.mc_sd));
    CHECK(e.bias == e.estimates[0] - one.truth.value);
    CHECK(e.mse == e.bias * e.bias);
}

TEST_CASE("replications are isolated from each other") {
    auto cfg = small_config({builtin(EstimatorKind::DRds), oracle_aipw()});
    auto batch = monte_carlo_run(cfg);
    auto alone = monte_carlo_run(cfg, {3});
    for (std::size_t k = 0; k < 2; ++k) CHECK(alone.estimators[k].estimates[0] == batch.estimators[k].estimates[3]);
}

TEST_CASE("thread count does not change the aggregates") {
    auto cfg = small_config({builtin(EstimatorKind::Naive), builtin(EstimatorKind::ORds), oracle_aipw()});
    auto serial = monte_carlo_run(cfg);
    cfg.threads = 3;
    auto parallel = monte_carlo_run(cfg);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(serial.estimators[k].bias == parallel.estimators[k].bias);
        CHECK(serial.estimators[k].mc_sd == parallel.estimators[k].mc_sd);
        CHECK(serial.estimators[k].coverage == parallel.estimators[k].coverage);
        CHECK(serial.estimators[k].estimates == parallel.estimators[k].estimates);
    }
}

TEST_CASE("failed replications are counted") {
    NamedEstimator flaky;
    flaky.name = "flaky";
    flaky.custom = [](const SimulatedSample& s, const PipelineSettings& ps, Rng& rng) {
        if (rng.below(3) == 0) throw DivergenceError("synthetic failure", 7);
        return naive_report(s.data, ps.estimand, ps.alpha);
    };
    auto cfg = small_config({flaky}, 30);
    cfg.max_failure_rate = 0.9;
    auto rep = monte_carlo_run(cfg);
    CHECK(rep.estimators[0].failed > 0);
    CHECK(rep.estimators[0].failed + rep.estimators[0].completed == 30);
    CHECK(rep.estimators[0].failures.size() == rep.estimators[0].failed);

    cfg.max_failure_rate = 0.05;
    CHECK_THROWS_AS(monte_carlo_run(cfg), ConvergenceError);
}

TEST_CASE("network estimators run end to end") {
    auto cfg = small_config({builtin(EstimatorKind::DRcnn), builtin(EstimatorKind::DRmlp)}, 2);
    cfg.pipeline.nn.train.epochs = 3;
    cfg.pipeline.nn.outcome_channels = {8, 4};
    cfg.pipeline.nn.propensity_channels = {4, 2};
    cfg.pipeline.nn.outcome_hidden = {8, 8};
    cfg.pipeline.nn.propensity_hidden = {4, 4};
    auto rep = monte_carlo_run(cfg);
    for (const auto& e : rep.estimators) {
        CHECK(e.completed == 2);
        CHECK(std::isfinite(e.bias));
    }
    cfg.pipeline.estimand = Estimand::ACE;
    auto ace = monte_carlo_run(cfg);
    CHECK(ace.estimators[0].completed == 2);
}

TEST_CASE("config validation") {
    auto cfg = small_config({builtin(EstimatorKind::Naive)});
    cfg.n = 10;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config({});
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config({builtin(EstimatorKind::Naive)});
    cfg.setting = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_estimator("drcnn") == EstimatorKind::DRcnn);
    CHECK(parse_estimator("NAIVE") == EstimatorKind::Naive);
    CHECK_THROWS_AS(parse_estimator("tmle"), ConfigError);
}
