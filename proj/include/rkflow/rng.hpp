#pragma once

#include <cmath>
#include <cstdint>

#include "rkflow/errors.hpp"

namespace rkflow {

// Counter-based 64-bit generator (SplitMix64, Steele et al. 2014).  The state
// advances by a fixed odd constant and the output is a bijective mix of the
// state, so the stream is a pure function of (seed, draw index) and identical
// on every platform.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform on (0, 1]; never returns 0 so logs are safe.
    double next_uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; one spare is cached per generator.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // Gamma(shape, scale) by Marsaglia-Tsang squeeze (shape >= 1).
    double next_gamma(double shape, double scale) {
        if (shape < 1.0) throw invalid_input_error("next_gamma: shape must be >= 1");
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = next_normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = next_uniform();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v * scale;
            }
        }
    }

    // Chi-squared with dof degrees of freedom.  When dof is an even integer
    // the draw is an explicit sum of dof squared normals; otherwise it falls
    // back to Gamma(dof/2, 2).
    double next_chi_squared(double dof) {
        const double rounded = std::round(dof);
        const bool even_integer =
            std::abs(dof - rounded) < 1e-12 && std::fmod(rounded, 2.0) == 0.0;
        if (even_integer) {
            double sum = 0.0;
            const int n = static_cast<int>(rounded);
            for (int i = 0; i < n; ++i) {
                const double z = next_normal();
                sum += z * z;
            }
            return sum;
        }
        return next_gamma(0.5 * dof, 2.0);
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Derives an independent stream seed from (seed, stream tag, index).  Used to
// give datasets, feature banks and weight inits their own reproducible
// streams under a single experiment seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index = 0) {
    SplitMix64 mix(seed ^ (stream * 0xA24BAED4963EE407ull));
    mix.next_u64();
    SplitMix64 mix2(mix.next_u64() + index * 0x9FB21C651E98DF25ull);
    return mix2.next_u64();
}

}  // namespace rkflow
