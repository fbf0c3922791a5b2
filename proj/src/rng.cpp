#include "clab/rng.hpp"

#include "clab/dist.hpp"

#include <cmath>
#include <stdexcept>

namespace clab {

std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
}

Rng Rng::substream(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t sm = seed;
    const std::uint64_t mixed = splitmix64_next(sm) ^ (0x9E3779B97F4A7C15ULL * (index + 1));
    return Rng(mixed);
}

static inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl64(state_[3], 45);
    return result;
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

bool Rng::bernoulli(double p) {
    return uniform01() < p;
}

double Rng::normal() {
    // Inverse-CDF transform; uniform01 never returns 1.0 and the offset
    // keeps the argument strictly inside (0, 1).
    const double u = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    return normal_quantile(u);
}

double Rng::normal(double mean, double sd) {
    return mean + sd * normal();
}

double Rng::lognormal(double mu, double sigma) {
    return std::exp(mu + sigma * normal());
}

std::pair<double, double> Rng::bivariate_normal(double rho) {
    const double z1 = normal();
    const double z2 = normal();
    return {z1, rho * z1 + std::sqrt(1.0 - rho * rho) * z2};
}

std::uint64_t Rng::uniform_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("uniform_below: bound must be positive");
    const std::uint64_t threshold = (0ULL - bound) % bound;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return r % bound;
    }
}

}  // namespace clab
