#include "cnncausal/errors.hpp"
#include "cnncausal/nn/conv.hpp"
#include "cnncausal/nn/network.hpp"
#include "cnncausal/nn/spec.hpp"
#include "cnncausal/nn/train.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace cnncausal;
using namespace cnncausal::nn;

namespace {

std::vector<double> uniform_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = lo + (hi - lo) * rng.uniform();
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("conv layer hand examples") {
    std::vector<double> h{1, -1, 2};
    CHECK(conv_layer_forward(h, FilterMask{{1, 1}}, std::vector<double>(4, 0.0)) ==
          std::vector<double>{1, 0, 1, 2});

    std::vector<double> h2{1, 0};
    CHECK(conv_layer_forward(h2, FilterMask{{2, 0}}, std::vector<double>(3, -1.0)) ==
          std::vector<double>{3, 1, 1});

    auto zero = conv_layer_forward(h, FilterMask{{0, 0, 0}}, std::vector<double>(5, 0.0));
    CHECK(zero == std::vector<double>(5, 0.0));

    CHECK_THROWS_AS(conv_layer_forward(h, FilterMask{{1, 1}}, std::vector<double>(3, 0.0)),
                    StructuralError);
    CHECK_THROWS_AS(conv_layer_forward(h, FilterMask{}, std::vector<double>(3, 0.0)),
                    StructuralError);
}

TEST_CASE("toeplitz matrix entries") {
    Matrix w = toeplitz_matrix(FilterMask{{1, 2, 3}}, 3);
    REQUIRE(w.rows() == 5);
    REQUIRE(w.cols() == 3);
    Matrix expect(5, 3);
    expect << 1, 0, 0,
              2, 1, 0,
              3, 2, 1,
              0, 3, 2,
              0, 0, 3;
    CHECK(w == expect);
}

TEST_CASE("sliding window matches the materialized Toeplitz product") {
    Rng rng(101);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t d = 1 + rng.below(12), s = 1 + rng.below(4);
        auto h = uniform_vec(rng, d, -3, 3);
        auto taps = uniform_vec(rng, s + 1, -2, 2);
        auto bias = uniform_vec(rng, d + s, -1, 1);
        worst = std::max(worst, max_abs_diff(conv_layer_forward(h, FilterMask{taps}, bias),
                                             oracle::toeplitz_relu(h, taps, bias)));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("structured bias materialization") {
    StructuredBias b{{1, 2}, 7, {3, 4}};
    CHECK(b.materialize(6) == std::vector<double>{1, 2, 7, 7, 3, 4});
    CHECK(b.materialize(4) == std::vector<double>{1, 2, 3, 4});
    CHECK_THROWS_AS(b.materialize(3), StructuralError);
    CHECK(StructuredBias::zeros(2).materialize(5) == std::vector<double>(5, 0.0));

    std::vector<double> h{0.5, -0.25, 1.0};
    auto via_struct = conv_layer_forward(h, FilterMask{{1, -1, 0.5}}, b);
    auto via_vec = conv_layer_forward(h, FilterMask{{1, -1, 0.5}}, b.materialize(5));
    CHECK(via_struct == via_vec);
}

TEST_CASE("theoretical cnn forward examples") {
    TheoryCnn zero(CnnSpec::theoretical(4, 2, 3, 2));
    std::vector<double> x{0.3, -1, 2, 0.5};
    CHECK(zero.evaluate(x) == 0.0);

    TheoryCnn net(CnnSpec::theoretical(2, 2, 1, 1));
    net.set_mask(0, 1, FilterMask{{1, 1, 1}});
    net.set_final_bias(0, std::vector<double>(4, 0.0));
    net.set_readout(0, std::vector<double>(4, 1.0));
    CHECK(net.evaluate(std::vector<double>{1, 1}) == 6.0);

    CHECK_THROWS_AS(net.evaluate(std::vector<double>{1, 1, 1}), StructuralError);
    CHECK_THROWS_AS(net.set_mask(0, 1, FilterMask{{1, 1}}), StructuralError);
}

TEST_CASE("theoretical cnn equals a chain of Toeplitz layers") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const auto spec = oracle::small_theory_spec(rng);
        TheoryCnn net(spec);
        oracle::randomize(net, rng);
        auto x = uniform_vec(rng, spec.input_length);

        double expect = 0.0;
        for (std::size_t e = 0; e < spec.channels; ++e) {
            std::vector<double> h = x;
            for (std::size_t l = 1; l <= spec.depth; ++l)
                h = oracle::toeplitz_relu(h, net.mask(e, l).taps, net.bias(e, l));
            auto c = net.readout(e);
            for (std::size_t i = 0; i < h.size(); ++i) expect += c[i] * h[i];
        }
        CHECK(std::abs(net.evaluate(x) - expect) <= 1e-12 * std::max(1.0, std::abs(expect)));
    }
}

TEST_CASE("hidden layer lengths follow d + S*l") {
    Rng rng(9);
    for (int rep = 0; rep < 100; ++rep) {
        const auto spec = oracle::small_theory_spec(rng);
        TheoryCnn net(spec);
        oracle::randomize(net, rng);
        const std::size_t batch = 3;
        auto x = uniform_vec(rng, batch * spec.input_length);
        Tape tape;
        std::vector<double> out(batch);
        net.forward(x, batch, out, tape);
        for (std::size_t e = 0; e < spec.channels; ++e)
            for (std::size_t l = 1; l <= spec.depth; ++l) {
                const std::size_t slot = 1 + 2 * (e * spec.depth + l - 1);
                REQUIRE(slot + 1 < tape.buffers.size());
                CHECK(tape.buffers[slot].size() == spec.layer_length(l) * batch);
                CHECK(tape.buffers[slot + 1].size() == spec.layer_length(l) * batch);
            }
        for (std::size_t e = 0; e < spec.channels; ++e)
            CHECK(net.bias(e, spec.depth).size() == spec.input_length + spec.span * spec.depth);
    }
}

TEST_CASE("hidden-layer biases share the middle value") {
    TheoryCnn net(CnnSpec::theoretical(5, 2, 3, 1));
    Rng rng(3);
    oracle::randomize(net, rng);
    for (std::size_t l = 1; l < 3; ++l) {
        auto b = net.bias(0, l);
        REQUIRE(b.size() == 5 + 2 * l);
        for (std::size_t i = 2; i + 2 < b.size(); ++i) CHECK(b[i] == b[2]);
    }
}

TEST_CASE("batched forward agrees with single-row evaluation") {
    Rng rng(77);
    std::vector<std::unique_ptr<Network>> nets;
    nets.push_back(std::make_unique<TheoryCnn>(CnnSpec::theoretical(4, 2, 2, 3)));
    nets.push_back(std::make_unique<PracticalCnn>(CnnSpec::practical(2, 6, 2, {4, 3})));
    nets.push_back(std::make_unique<Mlp>(MlpSpec{5, {7, 4}}));
    for (auto& net : nets) {
        oracle::randomize(*net, rng, 0.5);
        const std::size_t batch = 9, dim = net->input_dim();
        auto x = uniform_vec(rng, batch * dim);
        auto all = net->evaluate_batch(x, batch);
        for (std::size_t b = 0; b < batch; ++b) {
            std::vector<double> row(x.begin() + b * dim, x.begin() + (b + 1) * dim);
            CHECK(std::abs(net->evaluate(row) - all[b]) <= 1e-13);
        }
    }
}

TEST_CASE("practical cnn on a single static covariate block") {
    auto spec = CnnSpec::practical(1, 10, 0, {128, 16});
    CHECK(spec.input_dim() == 10);
    PracticalCnn net(spec);
    Rng rng(1);
    net.initialize(rng);
    auto x = uniform_vec(rng, 10);
    CHECK(std::isfinite(net.evaluate(x)));

    auto bad = CnnSpec::practical(1, 4, 0, {3, 3}, 2);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

// -- parameter count --------------------------------------------------------

TEST_CASE("parameter count worked values") {
    CHECK(parameter_count(CnnSpec::theoretical(2, 2, 2, 1)) == 42);
    CHECK(parameter_count(CnnSpec::theoretical(3, 2, 3, 2)) == 162);
    CHECK(parameter_count(CnnSpec::theoretical(2, 2, 2, 2)) == 84);
    CHECK_THROWS_AS(parameter_count(CnnSpec::practical(1, 10, 0, {4, 2})), ConfigError);
}

TEST_CASE("parameter count equals slot enumeration") {
    Rng rng(2024);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t d = 2 + rng.below(10);
        const std::size_t s = 2 + rng.below(d - 1);
        const std::size_t depth = 1 + rng.below(8), e = 1 + rng.below(6);
        CAPTURE(d);
        CAPTURE(s);
        CAPTURE(depth);
        CAPTURE(e);
        const auto spec = CnnSpec::theoretical(d, s, depth, e);
        CHECK(parameter_count(spec) == oracle::enumerate_slots(e, d, s, depth));
        CHECK(parameter_count(CnnSpec::theoretical(d, s, depth, 2 * e)) == 2 * parameter_count(spec));
    }
}

// -- rate schedule ----------------------------------------------------------

TEST_CASE("rate schedule examples") {
    auto a = rate_schedule(10000, 10);
    CHECK(a.channels == 46);
    CHECK(a.depth == 103);
    auto b = rate_schedule(100, 2);
    CHECK(b.channels == 3);
    CHECK(b.depth == 28);

    std::size_t prev = 0;
    for (std::size_t n = 2; n < 200000; n = n * 3 / 2 + 1) {
        const auto r = rate_schedule(n, 6);
        CHECK(r.channels >= prev);
        CHECK(r.channels >= 1);
        CHECK(r.depth >= 1);
        prev = r.channels;
    }
    CHECK_THROWS_AS(rate_schedule(1, 3), DomainError);
    CHECK_THROWS_AS(rate_schedule(100, 1), DomainError);
    CHECK_THROWS_AS(rate_schedule(100, 3, 0.0), DomainError);
}

// -- losses -----------------------------------------------------------------

TEST_CASE("loss values") {
    CHECK(loss_value(LossKind::Squared, 1.5, 1.5) == 0.0);
    CHECK(loss_value(LossKind::Squared, 1.0, -1.0) == 4.0);
    CHECK(std::abs(loss_value(LossKind::Logistic, 0.0, 0.0) - std::log(2.0)) < 1e-15);
    CHECK(std::abs(loss_value(LossKind::Logistic, 0.0, 1.0) - std::log(2.0)) < 1e-15);
    CHECK(std::isfinite(loss_value(LossKind::Logistic, 800.0, 0.0)));
    CHECK(std::abs(loss_value(LossKind::Logistic, 800.0, 1.0)) < 1e-12);
    CHECK_THROWS_AS(loss_value(LossKind::Logistic, 0.0, 0.5), DomainError);
    CHECK_THROWS_AS(loss_derivative(LossKind::Logistic, 0.0, 2.0), DomainError);
}

TEST_CASE("loss Lipschitz probe") {
    Rng rng(8);
    const double m = 3.0, mp = 2.0 * m;
    bool ok_sq = true, ok_log = true;
    for (int i = 0; i < 10000; ++i) {
        const double f = (2 * rng.uniform() - 1) * mp, g = (2 * rng.uniform() - 1) * mp;
        const double z = (2 * rng.uniform() - 1) * m;
        ok_sq &= std::abs(loss_value(LossKind::Squared, f, z) - loss_value(LossKind::Squared, g, z)) <=
                 2 * (mp + m) * std::abs(f - g) + 1e-12;
        const double a = (2 * rng.uniform() - 1) * 50, b = (2 * rng.uniform() - 1) * 50;
        const double y = rng.below(2);
        ok_log &= std::abs(loss_value(LossKind::Logistic, a, y) - loss_value(LossKind::Logistic, b, y)) <=
                  std::abs(a - b) + 1e-12;
    }
    CHECK(ok_sq);
    CHECK(ok_log);
}

// -- gradients --------------------------------------------------------------

TEST_CASE("gradients match finite differences") {
    for (LossKind loss : {LossKind::Squared, LossKind::Logistic}) {
        for (int kind : {0, 1, 2}) {
            const auto r = oracle::gradient_sweep(kind, loss, 11 + kind, 100);
            MESSAGE("checked " << r.checked << " partials, worst relative error " << r.worst_rel);
            CHECK(r.networks == 100);
            CHECK(r.worst_rel <= 1e-4);
        }
    }
}
