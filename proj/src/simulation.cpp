#include "cnncausal/simulation.hpp"

#include "cnncausal/errors.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

namespace cnncausal::sim {

Matrix gen_covariates(Rng& rng, std::size_t n) {
    Matrix x(static_cast<Eigen::Index>(n), 10);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (int j = 0; j < 10; ++j) x(i, j) = sample_normal(rng, kMeans[j], kSds[j]);
    return x;
}

double setting1_signal(const double* x) {
    auto sq = [](double v) { return v * v; };
    auto cube = [](double v) { return v * v * v; };
    return sq(x[1] - x[0]) + cube(x[3] - x[2]) + sq(x[5] - x[4]) + cube(x[7] - x[6]) +
           sq(x[9] - x[8]);
}

double step_rise(double x, double y, double z, double w) {
    return (y / x > 1.15 && z / y > 1.15 && w / z > 1.15) ? 10.0 : 0.0;
}

double step_flat(double x, double y, double z, double w) {
    return (y / x < 1.05 && z / y < 1.05 && w / z < 1.05) ? 5.0 : 0.0;
}

double step_zigzag(double x, double y, double z, double w) {
    return (y - 1.1 * x) * (z - 1.1 * y) * (w - 1.1 * z) < 0.0 ? 3.0 : 0.0;
}

double setting2_signal(const double* x) {
    return step_rise(x[0], x[1], x[2], x[3]) + step_flat(x[3], x[4], x[5], x[6]) +
           step_zigzag(x[5], x[6], x[7], x[8]);
}

namespace {

// Error-free parts of one design at one covariate row.
struct Truth {
    double mu0, mu1, p;
};

Truth truth_at(int setting, const double* x) {
    if (setting == 1) {
        const double d = setting1_signal(x);
        return {1.0 + 0.001 * d, 2.0 - 0.001 * d, 1.0 / (1.0 + std::exp(5e-6 * d))};
    }
    const double g = setting2_signal(x);
    return {1.0 + g, 2.0 - g, 1.0 / (1.0 + std::exp(0.05 * x[4] - 0.1 * g))};
}

void check_setting(int setting) {
    if (setting != 1 && setting != 2)
        throw ConfigError("simulation setting must be 1 or 2, got " + std::to_string(setting));
}

}  // namespace

SimulatedSample simulate(int setting, Rng& rng, std::size_t n) {
    check_setting(setting);
    if (n < 1) throw ConfigError("simulation: n must be >= 1");
    SimulatedSample s;
    const auto rows = static_cast<Eigen::Index>(n);
    Matrix x = gen_covariates(rng, n);
    s.y0.resize(rows);
    s.y1.resize(rows);
    s.p_true.resize(rows);
    s.mu0_true.resize(rows);
    s.mu1_true.resize(rows);
    s.data.y.resize(rows);
    s.data.t.resize(n);
    double row[10];
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (int j = 0; j < 10; ++j) row[j] = x(i, j);
        const Truth tr = truth_at(setting, row);
        s.mu0_true[i] = tr.mu0;
        s.mu1_true[i] = tr.mu1;
        s.p_true[i] = tr.p;
        s.y0[i] = tr.mu0 + sample_normal(rng, 0.0, 1.0);
        s.y1[i] = tr.mu1 + sample_normal(rng, 0.0, 1.0);
        const int t = sample_bernoulli(rng, tr.p);
        s.data.t[static_cast<std::size_t>(i)] = t;
        s.data.y[i] = t == 1 ? s.y1[i] : s.y0[i];
    }
    s.data.x = std::move(x);
    return s;
}

SimulatedSample dgp_setting1(Rng& rng, std::size_t n) { return simulate(1, rng, n); }
SimulatedSample dgp_setting2(Rng& rng, std::size_t n) { return simulate(2, rng, n); }

TrueEffect true_effect_oracle(int setting, Estimand estimand, std::size_t mc_size,
                              std::uint64_t seed) {
    check_setting(setting);
    if (mc_size < 2) throw ConfigError("true-effect oracle: mc_size must be >= 2");

    using Key = std::tuple<int, int, std::size_t, std::uint64_t>;
    static std::mutex mutex;
    static std::map<Key, TrueEffect> cache;
    const Key key{setting, static_cast<int>(estimand), mc_size, seed};
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }

    // Sums of w, w·τ, w², w²τ, w²τ² for the ratio Σwτ / Σw (w ≡ 1 for ACE).
    double sw = 0, swt = 0, sww = 0, swwt = 0, swwtt = 0;
    Rng rng = Rng::substream(seed, {static_cast<std::uint64_t>(setting)});
    constexpr std::size_t chunk = 1 << 16;
    double row[10];
    for (std::size_t done = 0; done < mc_size; done += chunk) {
        const std::size_t m = std::min(chunk, mc_size - done);
        const Matrix x = gen_covariates(rng, m);
        double cw = 0, cwt = 0, cww = 0, cwwt = 0, cwwtt = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (int j = 0; j < 10; ++j) row[j] = x(i, j);
            const Truth tr = truth_at(setting, row);
            const double tau = tr.mu1 - tr.mu0;
            const double w = estimand == Estimand::ACET ? tr.p : 1.0;
            cw += w;
            cwt += w * tau;
            cww += w * w;
            cwwt += w * w * tau;
            cwwtt += w * w * tau * tau;
        }
        sw += cw;
        swt += cwt;
        sww += cww;
        swwt += cwwt;
        swwtt += cwwtt;
    }
    const double n = static_cast<double>(mc_size);
    TrueEffect out;
    out.value = swt / sw;
    // Delta method: var(ratio) ≈ Σ w²(τ − R)² / (Σw)².
    const double r = out.value;
    const double resid = swwtt - 2 * r * swwt + r * r * sww;
    out.std_error = std::sqrt(std::max(0.0, resid) * n / (n - 1)) / sw;

    std::lock_guard lock(mutex);
    cache.emplace(key, out);
    return out;
}

NamedEstimator builtin(EstimatorKind kind) { return {to_string(kind), kind, {}}; }

NamedEstimator oracle_aipw() {
    NamedEstimator e;
    e.name = "DRoracle";
    e.custom = [](const SimulatedSample& s, const PipelineSettings& ps, Rng&) {
        const NuisanceFit fit = NuisanceFit::from(s.data, s.mu0_true, s.mu1_true, s.p_true);
        return ps.estimand == Estimand::ACE ? aipw_ace(s.data, fit, ps.alpha)
                                            : aipw_acet(s.data, fit, ps.alpha);
    };
    return e;
}

void McConfig::validate() const {
    check_setting(setting);
    if (n < 50) throw ConfigError("monte carlo: n must be >= 50");
    if (reps < 1) throw ConfigError("monte carlo: need at least one replication");
    if (estimators.empty()) throw ConfigError("monte carlo: no estimators requested");
    if (threads < 1) throw ConfigError("monte carlo: threads must be >= 1");
    if (!(pipeline.alpha > 0.0 && pipeline.alpha < 1.0))
        throw ConfigError("monte carlo: alpha must lie in (0,1)");
    if (!(max_failure_rate >= 0.0 && max_failure_rate < 1.0))
        throw ConfigError("monte carlo: failure threshold must lie in [0,1)");
    for (std::size_t k = 0; k < estimators.size(); ++k) {
        const auto& e = estimators[k];
        if (!e.kind && !e.custom) throw ConfigError("monte carlo: estimator '" + e.name + "' has no body");
        for (std::size_t j = 0; j < k; ++j)
            if (estimators[j].name == e.name)
                throw ConfigError("monte carlo: estimator '" + e.name + "' requested twice");
    }
}

MonteCarloReport monte_carlo_run(const McConfig& cfg) {
    std::vector<std::size_t> all(cfg.reps);
    for (std::size_t r = 0; r < cfg.reps; ++r) all[r] = r;
    return monte_carlo_run(cfg, all);
}

MonteCarloReport monte_carlo_run(const McConfig& cfg, const std::vector<std::size_t>& replications) {
    cfg.validate();
    MonteCarloReport report;
    report.config = cfg;
    report.truth = true_effect_oracle(cfg.setting, cfg.pipeline.estimand, cfg.oracle_mc_size,
                                      cfg.oracle_seed);

    const std::size_t reps = replications.size(), k_count = cfg.estimators.size();
    struct Cell {
        double tau = std::numeric_limits<double>::quiet_NaN();
        double se = std::numeric_limits<double>::quiet_NaN();
        bool covered = false;
        std::string error;
    };
    std::vector<std::vector<Cell>> cells(reps, std::vector<Cell>(k_count));
    const double truth = report.truth.value;

    auto run_one = [&](std::size_t slot) {
        const std::uint64_t r = replications[slot];
        Rng data_rng = Rng::substream(cfg.seed, {r, 0});
        const SimulatedSample sample = simulate(cfg.setting, data_rng, cfg.n);
        for (std::size_t k = 0; k < k_count; ++k) {
            Rng est_rng = Rng::substream(cfg.seed, {r, 1, k});
            const auto& est = cfg.estimators[k];
            Cell& c = cells[slot][k];
            try {
                const EstimateReport rep =
                    est.kind ? run_estimator(*est.kind, sample.data, cfg.pipeline, est_rng)
                             : est.custom(sample, cfg.pipeline, est_rng);
                if (!std::isfinite(rep.tau_hat) || !std::isfinite(rep.se))
                    throw DomainError("non-finite estimate");
                c.tau = rep.tau_hat;
                c.se = rep.se;
                c.covered = rep.ci_low <= truth && truth <= rep.ci_high;
            } catch (const Error& e) {
                c.error = "replication " + std::to_string(r) + ": " + e.what();
            }
        }
    };

    const std::size_t workers = std::min(cfg.threads, std::max<std::size_t>(reps, 1));
    if (workers <= 1) {
        for (std::size_t s = 0; s < reps; ++s) run_one(s);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t s; (s = next.fetch_add(1)) < reps;) {
                    try {
                        run_one(s);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    for (std::size_t k = 0; k < k_count; ++k) {
        EstimatorSummary s;
        s.name = cfg.estimators[k].name;
        double sum = 0, sum_se = 0, hits = 0;
        for (std::size_t slot = 0; slot < reps; ++slot) {
            const Cell& c = cells[slot][k];
            s.estimates.push_back(c.tau);
            s.std_errors.push_back(c.se);
            if (!c.error.empty()) {
                ++s.failed;
                s.failures.push_back(c.error);
                continue;
            }
            ++s.completed;
            sum += c.tau;
            sum_se += c.se;
            hits += c.covered;
        }
        if (static_cast<double>(s.failed) > cfg.max_failure_rate * static_cast<double>(reps) ||
            s.completed == 0)
            throw ConvergenceError("monte carlo: estimator " + s.name + " failed in " +
                                   std::to_string(s.failed) + " of " + std::to_string(reps) +
                                   " replications; first: " +
                                   (s.failures.empty() ? std::string("-") : s.failures.front()));
        const double m = static_cast<double>(s.completed);
        const double mean = sum / m;
        s.bias = mean - truth;
        s.coverage = hits / m;
        s.est_sd = sum_se / m;
        if (s.completed > 1) {
            double ss = 0;
            for (std::size_t slot = 0; slot < reps; ++slot)
                if (cells[slot][k].error.empty()) ss += (cells[slot][k].tau - mean) * (cells[slot][k].tau - mean);
            s.mc_sd = std::sqrt(ss / (m - 1));
            s.mse = s.bias * s.bias + s.mc_sd * s.mc_sd;
        } else {
            s.mc_sd = std::numeric_limits<double>::quiet_NaN();
            s.mse = s.bias * s.bias;
        }
        report.estimators.push_back(std::move(s));
    }
    return report;
}

}  // namespace cnncausal::sim
