#pragma once

#include <cstdint>
#include <unordered_map>

#include "mpfa/event_stream.hpp"
#include "mpfa/rng.hpp"

namespace mpfa {

/// Memory of observed node pairs, undirected (events are interactions, not
/// arcs). Unlimited mode keeps every pair forever; windowed mode only counts
/// a pair as present while its last occurrence is within `window` time units.
class EdgeMemory {
public:
    explicit EdgeMemory(double window = 0.0) : window_(window) {}

    static std::uint64_t key(int a, int b) {
        const std::uint64_t lo = static_cast<std::uint64_t>(a < b ? a : b);
        const std::uint64_t hi = static_cast<std::uint64_t>(a < b ? b : a);
        return (hi << 32) | lo;
    }

    void insert(int src, int dst, double t) {
        auto [it, fresh] = last_seen_.try_emplace(key(src, dst), t);
        if (!fresh && t > it->second) it->second = t;
    }

    bool contains(int src, int dst, double t) const {
        auto it = last_seen_.find(key(src, dst));
        if (it == last_seen_.end()) return false;
        if (window_ > 0.0) return t - it->second <= window_;
        return true;
    }

    double window() const { return window_; }
    std::size_t size() const { return last_seen_.size(); }

private:
    double window_;
    std::unordered_map<std::uint64_t, double> last_seen_;
};

/// EdgeBank score: 1 if the pair has been observed (within the window, when
/// configured), else 0. Purely memory based, no trainable parameters.
inline double edgebank_score(const EdgeMemory& mem, int src, int dst, double t) {
    return mem.contains(src, dst, t) ? 1.0 : 0.0;
}

/// Calibration-floor baseline: uniform score in [0,1), seeded.
class RandomScore {
public:
    explicit RandomScore(std::uint64_t seed) : rng_(seed) {}
    double operator()() { return rng_.uniform(); }

private:
    Rng rng_;
};

}  // namespace mpfa
