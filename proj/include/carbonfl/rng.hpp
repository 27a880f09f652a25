#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace carbonfl {

// splitmix64 finalizer.
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return mix64(a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull));
}

/// Counter-based random stream: draw i is a pure function of
/// (seed, stream, i). Consumers holding distinct streams can run in
/// parallel and still reproduce the sequential draws bit for bit.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0)
        : base_(hash_combine(mix64(seed + 0x243f6a8885a308d3ull), stream)) {}

    uint64_t next_u64() { return mix64(base_ + 0x9e3779b97f4a7c15ull * ++counter_); }

    /// Uniform in [0, 1) with 53 significant bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (always consumes two uniforms).
    double next_normal() {
        double u1 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        const double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Unbiased integer in [0, n) by rejection.
    uint64_t next_below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang, with the shape<1 boost.
    double next_gamma(double shape) {
        if (shape < 1.0) {
            double u = next_unit();
            if (u < 1e-300) u = 1e-300;
            return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            const double x = next_normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = next_unit();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[next_below(i)]);
    }

    /// k distinct values from [0, n), returned sorted ascending.
    std::vector<int> sample_without_replacement(int n, int k);

private:
    uint64_t base_;
    uint64_t counter_ = 0;
};

}  // namespace carbonfl
