#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace ramc {

/// Tags separating independent random streams derived from one master seed.
/// Values are part of the reproducibility contract; never renumber.
enum class Purpose : std::uint64_t {
    WindProfile = 1,
    DemandProfile = 2,
    MarginYear = 3,
    MarginDay = 4,
    TreeFit = 5,
    InitialDays = 6,
    Pool = 7,
    RandomDays = 8,
    DailyTest = 9,
    YearlyTest = 10,
    MlmcPilot = 11,
    MlmcMain = 12,
    Repetition = 13,
    Variant = 14,
    Round = 15,
    ForestTarget = 16,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a child key from (parent key, purpose, index). Pure function, so a
/// stream can be rebuilt for any item without touching its siblings.
inline constexpr std::uint64_t derive_key(std::uint64_t parent, Purpose purpose,
                                          std::uint64_t index = 0) noexcept
{
    std::uint64_t h = splitmix64(parent ^ 0x6a09e667f3bcc909ULL);
    h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
    h = splitmix64(h ^ (index * 0xd1b54a32d192ed03ULL + 0x2545f4914f6cdd1dULL));
    return h;
}

/// xoshiro256** generator seeded from a 64-bit key via splitmix64.
/// Satisfies UniformRandomBitGenerator.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t key) noexcept
    {
        std::uint64_t x = key;
        for (auto& s : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            s = splitmix64(x);
        }
    }

    Stream(std::uint64_t parent, Purpose purpose, std::uint64_t index = 0) noexcept
        : Stream(derive_key(parent, purpose, index))
    {
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
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

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_open_zero() noexcept { return 1.0 - uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept
    {
        // Lemire's multiply-shift with rejection.
        std::uint64_t x = (*this)();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                x = (*this)();
                m = static_cast<__uint128_t>(x) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Standard normal by Box-Muller (one variate per call).
    double normal() noexcept
    {
        const double u1 = uniform_open_zero();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Number of Bernoulli(p) trials up to and including the first success (>= 1).
    std::uint64_t geometric(double p) noexcept
    {
        if (p >= 1.0) {
            return 1;
        }
        const double u = uniform_open_zero();
        const double k = std::floor(std::log(u) / std::log1p(-p));
        if (k >= 9.0e18) {
            return std::numeric_limits<std::uint64_t>::max() / 2;
        }
        return static_cast<std::uint64_t>(k) + 1;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4]{};
};

} // namespace ramc
