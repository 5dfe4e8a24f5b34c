#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hybridtrain {

// Counter-free splitmix64 generator. We avoid <random> distributions on
// purpose: their output is implementation-defined, and every simulation
// result in this project must be bit-reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        return next_u64() % n;
    }

    // standard normal via Box-Muller (cosine branch only, deterministic)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // multiplicative jitter with unit mean: exp(sigma*z - sigma^2/2)
    double lognormal_jitter(double sigma) {
        if (sigma == 0.0) return 1.0;
        return std::exp(sigma * normal() - 0.5 * sigma * sigma);
    }

    // Knuth's method; lambda is small everywhere we use it
    std::uint64_t poisson(double lambda) {
        double limit = std::exp(-lambda);
        double p = 1.0;
        std::uint64_t k = 0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

private:
    std::uint64_t state_;
};

// FNV-1a based stream derivation so that independent subsystems
// (batch sampling, network jitter, data generation, ...) never share a
// random stream no matter how the simulation interleaves them.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffULL;
            h *= 0x100000001b3ULL;
        }
    };
    mix(seed);
    for (char c : tag) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    mix(a);
    mix(b);
    return h;
}

inline Rng stream(std::uint64_t seed, std::string_view tag,
                  std::uint64_t a = 0, std::uint64_t b = 0) {
    return Rng(derive_seed(seed, tag, a, b));
}

} // namespace hybridtrain
