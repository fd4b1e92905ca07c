#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "texr/hash.hpp"

namespace texr {

// xoshiro256** seeded via SplitMix64. Every random draw in the artifact goes
// through this generator so that results are bit-stable across platforms and
// standard library versions (std::normal_distribution etc. are not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) {
            word = splitmix64(sm);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, bound). Lemire multiply-shift; bias is < 2^-64.
    std::uint64_t uniform_int(std::uint64_t bound) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

    // Standard normal via Box-Muller. Consumes exactly two uniforms per draw.
    double normal() {
        double u1 = 1.0 - uniform01(); // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(alpha, 1) via Marsaglia-Tsang, alpha-boost for alpha < 1.
    double gamma(double alpha) {
        if (alpha < 1.0) {
            double u = 1.0 - uniform01();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = 1.0 - uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(std::span<const double> alphas) {
        std::vector<double> out(alphas.size());
        double total = 0.0;
        for (size_t i = 0; i < alphas.size(); ++i) {
            out[i] = gamma(alphas[i]);
            total += out[i];
        }
        if (total <= 0.0) {
            double u = 1.0 / static_cast<double>(alphas.size());
            for (auto& p : out) p = u;
            return out;
        }
        for (auto& p : out) p /= total;
        return out;
    }

    // Index draw from an (unnormalized) non-negative weight vector.
    size_t categorical(std::span<const double> weights) {
        double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        double u = uniform01() * total;
        double acc = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // k distinct values from [0, n), in random order.
    std::vector<int> sample_indices(int n, int k) {
        std::vector<int> pool(static_cast<size_t>(n));
        std::iota(pool.begin(), pool.end(), 0);
        shuffle(pool);
        pool.resize(static_cast<size_t>(k));
        return pool;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
};

} // namespace texr
