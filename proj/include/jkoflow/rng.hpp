#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace jkoflow {

// SplitMix64 with Box-Muller normals. Deliberately self-contained (no
// <random>) so that every seeded experiment is bit-reproducible across
// standard libraries, and so the stream can be re-derived in other languages:
//
//   state += 0x9E3779B97F4A7C15
//   z = state; z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
//   z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31
//
//   uniform01 = (z >> 11) * 2^-53                       in [0, 1)
//   normal    = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)      one normal per call,
//                                                       two uniforms consumed
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double normal() {
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(2.0 * kPi * u2);
    }

    std::vector<double> normals(std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = normal();
        return v;
    }

private:
    static constexpr double kPi = 3.141592653589793238462643383279502884;
    std::uint64_t state_;
};

}  // namespace jkoflow
