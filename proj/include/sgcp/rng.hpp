#pragma once

// Deterministic random streams. All distributions are implemented on top of
// the raw 64-bit generator so sequences are reproducible for a given seed
// independent of the standard library's distribution internals.

#include <cmath>
#include <cstdint>
#include <random>

#include "sgcp/common.hpp"
#include "sgcp/special.hpp"

namespace sgcp {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-derived child seeds: every (stream, index) cell of an experiment is
// re-runnable in isolation from the master seed alone.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ (0x9e3779b97f4a7c15ULL * (stream + 1))) + index);
}

class Rng {
   public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    // uniform on [0, 1)
    double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

    // uniform on (0, 1), safe as a quantile argument
    double uniform_pos() {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() { return normal_quantile(uniform_pos()); }

    // Gamma(shape, rate), mean shape/rate. Marsaglia-Tsang squeeze.
    double gamma(double shape, double rate) {
        if (!(shape > 0.0) || !(rate > 0.0)) throw numeric_error("gamma sampler requires positive shape and rate");
        if (shape < 1.0) {
            const double u = uniform_pos();
            return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
        }
    }

    // Poisson(mean): inversion for small means, PTRS transformed rejection
    // (Hoermann 1993) for large ones.
    std::uint64_t poisson(double mean) {
        if (!(mean >= 0.0)) throw numeric_error("poisson sampler requires nonnegative mean");
        if (mean == 0.0) return 0;
        if (mean < 30.0) {
            const double limit = std::exp(-mean);
            std::uint64_t k = 0;
            double prod = uniform_pos();
            while (prod > limit) {
                ++k;
                prod *= uniform_pos();
            }
            return k;
        }
        const double b = 0.931 + 2.53 * std::sqrt(mean);
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            double u = uniform() - 0.5;
            double v = uniform_pos();
            const double us = 0.5 - std::fabs(u);
            const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
                k * std::log(mean) - mean - std::lgamma(k + 1.0)) {
                return static_cast<std::uint64_t>(k);
            }
        }
    }

   private:
    std::mt19937_64 gen_;
};

}  // namespace sgcp
