#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace cnncausal {

/// xoshiro256** generator. Seeding and substream derivation go through
/// splitmix64, so the draw sequence depends only on the integers supplied
/// and is identical on every platform.
///
/// Substreams: `Rng::substream(base, {a, b, ...})` hashes the index path into
/// a fresh 256-bit state. Distinct paths give unrelated sequences; the
/// Monte Carlo runner uses `{replication, purpose}` paths so that a
/// replication's draws never depend on which other replications ran.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    static Rng substream(std::uint64_t base_seed, std::initializer_list<std::uint64_t> path);
    static Rng substream(std::uint64_t base_seed, std::uint64_t index) {
        return substream(base_seed, {index});
    }

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept;

    // Uniform on the open interval (0, 1); never returns 0 or 1.
    double uniform() noexcept;

    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) noexcept;

    bool operator==(const Rng& other) const noexcept = default;

private:
    std::array<std::uint64_t, 4> s_{};
    std::uint64_t seed_ = 0;
};

/// Standard normal CDF.
double std_normal_cdf(double z);

/// Inverse of the standard normal CDF, accurate to ~1e-15 in the body.
/// Throws DomainError unless 0 < p < 1.
double std_normal_quantile(double p);

/// N(mean, sd^2) by inverting one uniform draw. sd == 0 returns `mean` exactly.
double sample_normal(Rng& rng, double mean, double sd);

/// 1 with probability p. Consumes exactly one uniform draw.
int sample_bernoulli(Rng& rng, double p);

/// Logistic function 1 / (1 + e^{-z}), stable for large |z|.
double logistic(double z) noexcept;

}  // namespace cnncausal
