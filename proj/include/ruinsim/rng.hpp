#pragma once

// Random streams. Every path owns its own engines, seeded from
// (master seed, path index, stream id) through a splitmix64 chain, so
// results never depend on how paths are distributed across workers.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace ruinsim {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for stream `stream` of path `path` under `master`.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t path,
                                           std::uint64_t stream) noexcept
{
    return splitmix64(splitmix64(splitmix64(master) ^ path) + stream);
}

/// xoshiro256++ with a cached Box-Muller spare. Satisfies
/// UniformRandomBitGenerator so it can also feed <random> distributions.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

    void reseed(std::uint64_t seed) noexcept
    {
        std::uint64_t z = seed;
        for (auto& s : s_) {
            z = splitmix64(z);
            s = z;
        }
        has_spare_ = false;
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on the open interval (0, 1); never returns 0 or 1.
    double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    double exponential(double rate = 1.0) noexcept { return -std::log(uniform()) / rate; }

    double normal() noexcept
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Gamma(shape, scale) by Marsaglia-Tsang, with the U^(1/shape) boost for shape < 1.
    double gamma(double shape, double scale = 1.0) noexcept
    {
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0, 1.0);
            return scale * g * std::pow(uniform(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double z;
            double v;
            do {
                z = normal();
                v = 1.0 + c * z;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * z * z * z * z)
                return scale * d * v;
            if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v)))
                return scale * d * v;
        }
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Independent engines for the three randomness sources of one path.
struct PathStreams {
    Rng arrivals;
    Rng claims;
    Rng diffusion;

    static PathStreams for_path(std::uint64_t master, std::uint64_t path) noexcept
    {
        return PathStreams{Rng(derive_seed(master, path, 1)), Rng(derive_seed(master, path, 2)),
                           Rng(derive_seed(master, path, 3))};
    }
};

inline constexpr const char* kSeedScheme =
    "xoshiro256++ per path and source; seed = splitmix64(splitmix64(splitmix64(master) ^ path) + "
    "stream), stream 1 = arrivals, 2 = claims, 3 = diffusion; paths merged in fixed blocks of 1024";

} // namespace ruinsim
