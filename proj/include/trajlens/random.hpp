#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace trajlens {

/**
 * Seeded random source with platform-independent draws.
 *
 * The standard distributions are implementation-defined, so uniform and
 * normal variates are derived directly from the 64-bit engine output to keep
 * outputs identical across standard libraries.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        // Rejection sampling avoids modulo bias.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return static_cast<std::size_t>(x % n);
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    /// Knuth's method for small means, normal approximation otherwise.
    std::size_t poisson(double mean) {
        if (mean <= 0.0) {
            return 0;
        }
        if (mean > 60.0) {
            const double x = std::round(normal(mean, std::sqrt(mean)));
            return x < 0.0 ? 0 : static_cast<std::size_t>(x);
        }
        const double limit = std::exp(-mean);
        std::size_t k = 0;
        double p = uniform();
        while (p > limit) {
            ++k;
            p *= uniform();
        }
        return k;
    }

    /// Index drawn proportionally to non-negative weights; the sum must be positive.
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            total += w;
        }
        double target = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (target < weights[i]) {
                return i;
            }
            target -= weights[i];
        }
        for (std::size_t i = weights.size(); i-- > 0;) {
            if (weights[i] > 0.0) {
                return i;
            }
        }
        return 0;
    }

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stable seed derivation (splitmix64 over the parent seed and a salt).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view salt) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : salt) {
        h = (h ^ c) * 0x100000001b3ULL;
    }
    return derive_seed(seed, h);
}

} // namespace trajlens
