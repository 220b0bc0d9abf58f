#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "mpfa/errors.hpp"

namespace mpfa {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// SplitMix64 generator. The standard library engines are portable but the
/// distributions are not, so all randomness in this project goes through this
/// class to keep runs bit-reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); unbiased via rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ParameterError("Rng::below: empty range");
        const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller (one value per call; the pair's second
    /// half is discarded so the call count alone determines the stream).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

private:
    std::uint64_t state_;
};

/// Fans one global seed out into named independent sub-streams (data, init,
/// dropout, negatives, ...) so that perturbing one component leaves the
/// others untouched.
struct SeedBundle {
    std::uint64_t root = 0;

    std::uint64_t sub(std::string_view name) const {
        Rng mix(root ^ fnv1a64(name));
        return mix.next_u64();
    }

    Rng rng(std::string_view name) const { return Rng(sub(name)); }
};

}  // namespace mpfa
