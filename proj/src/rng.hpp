#pragma once

#include <cstdint>

namespace percept {

// splitmix64. The standard <random> distributions are implementation
// defined, so results would drift across toolchains; this generator gives
// the same stream everywhere, which the reproducibility guarantees
// (dataset bytes, weight init, epoch shuffles) depend on.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n). Modulo bias is unobservable for the small
    // n used here (n << 2^64).
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    // Uniform double in [0, 1) with 53 random bits.
    double real() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double range(double lo, double hi) { return lo + (hi - lo) * real(); }

private:
    std::uint64_t state_;
};

// Derives an independent stream from a base seed and a stream index, e.g.
// one shuffle stream per training epoch.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    SplitMix64 g(base ^ (stream * 0x9e3779b97f4a7c15ULL + 0x633d5c4b870f8f21ULL));
    g.next();
    return g.next();
}

}  // namespace percept
