#pragma once

// Deterministic random number generation for simulations and fold splitting.
//
// Generator: xoshiro256++ 1.0 (Blackman & Vigna), state seeded by expanding
// a 64-bit seed with splitmix64. Replication r of a simulation draws from
// substream(seed, r), derived with splitmix64 over (seed, r), so replications
// are reproducible independently of execution order.
//
// All variate transforms are implemented here (53-bit uniforms, inverse-CDF
// normals) because the standard library pins the mt19937 engine but not the
// distributions, which breaks bit-reproducibility across platforms.

#include <cstdint>
#include <utility>
#include <vector>

namespace clab {

inline constexpr const char* kRngAlgorithm = "xoshiro256++";

std::uint64_t splitmix64_next(std::uint64_t& state);

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Independent stream for replication `index` of master `seed`.
    static Rng substream(std::uint64_t seed, std::uint64_t index);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double uniform01();

    bool bernoulli(double p);

    double normal();
    double normal(double mean, double sd);
    double lognormal(double mu, double sigma);

    // Pair of standard normals with correlation rho.
    std::pair<double, double> bivariate_normal(double rho);

    // Unbiased integer in [0, bound) via rejection sampling; bound > 0.
    std::uint64_t uniform_below(std::uint64_t bound);

    template <typename T>
    void shuffle(std::vector<T>& values) {
        if (values.size() < 2) return;
        for (std::size_t i = values.size() - 1; i > 0; --i) {
            const std::size_t j =
                static_cast<std::size_t>(uniform_below(static_cast<std::uint64_t>(i) + 1));
            using std::swap;
            swap(values[i], values[j]);
        }
    }

private:
    std::uint64_t state_[4];
};

}  // namespace clab
