#pragma once

#include <cmath>
#include <cstdint>

namespace ncd {

// Deterministic 64-bit generator (splitmix64). All randomized parts of the
// library (k-means++ seeding, synthetic data, splits) consume this stream so
// results are reproducible across platforms and re-implementable from the
// description below:
//
//   state += 0x9E3779B97F4A7C15
//   z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   output = z ^ (z >> 31)
//
// next_double() takes the top 53 bits of next_u64(), giving a uniform double
// in [0, 1). next_gaussian() draws two uniforms u1, u2 and applies Box-Muller,
// returning sqrt(-2 ln(1 - u1)) * cos(2 pi u2); the second Box-Muller variate
// is discarded so every call consumes exactly two uniforms.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). n must be positive.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>(next_double() * static_cast<double>(n));
    }

    double next_gaussian() {
        double u1 = next_double();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(1.0 - u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    uint64_t state_;
};

} // namespace ncd
