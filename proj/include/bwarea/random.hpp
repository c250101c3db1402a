// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace bwarea {

/// Seeded engine shared by initialization, batching, corruption and sampling.
class Rng {
   public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::index on empty range");
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    /// Draws from an unnormalized categorical distribution.
    template <typename T>
    std::size_t categorical(std::span<const T> weights) {
        double total = 0;
        for (T w : weights) total += static_cast<double>(w);
        double u = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            u -= static_cast<double>(weights[i]);
            if (u < 0) return i;
        }
        // rounding left a sliver past the last bucket; take the last non-zero
        for (std::size_t i = weights.size(); i-- > 0;)
            if (weights[i] > T(0)) return i;
        return 0;
    }

    std::mt19937_64& engine() { return engine_; }

   private:
    std::mt19937_64 engine_;
};

}  // namespace bwarea
