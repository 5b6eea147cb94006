#pragma once

// Counter-based random numbers (Philox4x32-10). A draw is a pure function of
// (key, counter), so any substream can be regenerated independently of the
// order in which workers visit it.

#include <array>
#include <cmath>
#include <cstdint>

#include "absde/core.hpp"

namespace absde {

class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    explicit Philox4x32(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    Counter operator()(Counter ctr) const {
        Key k = key_;
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, k);
            k[0] += kW0;
            k[1] += kW1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    static Counter single_round(const Counter& c, const Key& k) {
        std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
        std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
        auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    Key key_;
};

/// Uniform in (0, 1) from two 32-bit words; never returns 0 or 1.
inline double uniform_open(std::uint32_t hi, std::uint32_t lo) {
    std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
    bits &= (std::uint64_t{1} << 53) - 1;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Stateless stream addressed by (seed, a, b, c): used for Brownian increments
/// (a = path, b = step, c = component pair) and probe sampling.
class CounterStream {
public:
    explicit CounterStream(std::uint64_t seed) : gen_(mix_seed(seed)) {}

    /// Two independent uniforms for the address.
    std::array<double, 2> uniforms(std::uint64_t a, std::uint32_t b, std::uint32_t c) const {
        auto r = gen_({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), b, c});
        return {uniform_open(r[0], r[1]), uniform_open(r[2], r[3])};
    }

    /// Two independent standard normals for the address (Box-Muller).
    std::array<double, 2> normals(std::uint64_t a, std::uint32_t b, std::uint32_t c) const {
        auto u = uniforms(a, b, c);
        double radius = std::sqrt(-2.0 * std::log(u[0]));
        double angle = 2.0 * kPi * u[1];
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

private:
    // splitmix64 finaliser so nearby seeds give unrelated keys
    static std::uint64_t mix_seed(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    Philox4x32 gen_;
};

/// Sequential convenience wrapper over CounterStream for test and probe code.
class SeededUniform {
public:
    SeededUniform(std::uint64_t seed, std::uint32_t lane = 0) : stream_(seed), lane_(lane) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        auto u = stream_.uniforms(counter_++, lane_, 0x5eedu);
        spare_ = u[1];
        have_spare_ = true;
        return u[0];
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next(); }

    double normal() {
        double u1 = next(), u2 = next();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

private:
    CounterStream stream_;
    std::uint32_t lane_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace absde
