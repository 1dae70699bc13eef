#pragma once

#include "tubempc/common.hpp"

#include <cmath>
#include <cstdint>

namespace tubempc {

/// Deterministic splitmix64 stream. The generator identifier recorded in
/// output headers is "splitmix64"; given the same 64-bit seed any
/// implementation of the reference algorithm reproduces the stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Independent per-run stream derived from (seed, index).
    static Rng substream(std::uint64_t seed, std::uint64_t index)
    {
        Rng base(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
        return Rng(base.next_u64());
    }

    std::uint64_t next_u64()
    {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [-1, 1].
    double uniform_sym() { return 2.0 * uniform01() - 1.0; }

    /// Uniform sign in {-1, +1}.
    double sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

    /// Vector with i.i.d. entries uniform in [-1, 1].
    Vector box_vector(int dim)
    {
        Vector v(dim);
        for (int i = 0; i < dim; ++i) v[i] = uniform_sym();
        return v;
    }

    /// Standard normal via Box-Muller.
    double gaussian()
    {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01(), u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Vector gaussian_vector(int dim)
    {
        Vector v(dim);
        for (int i = 0; i < dim; ++i) v[i] = gaussian();
        return v;
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline constexpr const char* kRngId = "splitmix64";

}  // namespace tubempc
