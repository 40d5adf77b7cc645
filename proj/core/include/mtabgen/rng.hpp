#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mtabgen/common.hpp"

namespace mtabgen {

// Deterministic RNG. The engine is std::mt19937_64 (its sequence is fixed by
// the standard); the distribution transforms are implemented here instead of
// using std::normal_distribution etc., whose output is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed), seed_(seed) {}

    // Substream derivation for reproducible row/epoch-sharded sampling.
    // Independent of this stream's current position.
    Rng derive(uint64_t a, uint64_t b = 0) const {
        return Rng(hash_combine(hash_combine(seed_, a), b));
    }

    uint64_t bits() { return eng_(); }

    // Uniform in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform in (0,1), safe as a log argument.
    double uniform_open() {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    // Uniform integer in [0, n). Rejection sampling, exactly uniform.
    uint64_t uniform_int(uint64_t n) {
        require(n > 0, "uniform_int: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller (no cached second draw).
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Index sample from unnormalized nonnegative weights.
    size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        require(total > 0.0, "categorical: weights sum to zero");
        double u = uniform() * total;
        for (size_t k = 0; k + 1 < weights.size(); ++k) {
            u -= weights[k];
            if (u < 0.0) return k;
        }
        return weights.size() - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    uint64_t seed_;
};

}  // namespace mtabgen
