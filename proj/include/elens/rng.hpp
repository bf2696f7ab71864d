#pragma once

#include <cstdint>

namespace elens {

// Self-contained generator so seeded weights and synthetic data do not
// depend on standard-library distribution internals.
struct SplitMix64 {
    uint64_t state = 0;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 24 bits of resolution.
    float uniform() {
        return static_cast<float>(next() >> 40) * (1.0f / 16777216.0f);
    }

    // Uniform in [-limit, limit].
    float symmetric(float limit) { return (2.0f * uniform() - 1.0f) * limit; }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return n ? next() % n : 0; }
};

// Stable stream derivation for order-independent per-item generators.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    SplitMix64 mix(seed ^ (0xA0761D6478BD642Full + stream * 0xE7037ED1A0B428DBull));
    return mix.next();
}

}  // namespace elens
