#pragma once

#include <cstdint>

namespace distenc {

// splitmix64. Every random choice in the library (weight init, masking,
// shuffling) funnels through this generator so runs are reproducible from a
// single seed. The reference output sequence is frozen in the test suite;
// a port that matches it reproduces every initialization bit-for-bit.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform float in [lo, hi): lo + (hi - lo) * next_unit(), rounded once.
    float next_uniform(float lo, float hi) {
        return static_cast<float>(lo + (static_cast<double>(hi) - lo) * next_unit());
    }

    // Uniform integer in [0, n), n > 0. Plain modulo; the bias is irrelevant
    // for n << 2^64 and keeps ports one-line.
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t state_;
};

// Stable per-purpose seed derivation so one master seed can feed several
// independent streams (init, shuffling, per-step masking).
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
    SplitMix64 g(master ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
    return g.next_u64();
}

}  // namespace distenc
