#pragma once

#include <cstdint>
#include <limits>

namespace rmct {

/// PCG-XSH-RR 64/32 (O'Neill). Seeding follows the reference pcg32_srandom_r,
/// so a (seed, stream) pair yields the same sequence on every platform.
class Pcg32 {
public:
    using result_type = std::uint32_t;

    constexpr Pcg32() : Pcg32(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}
    constexpr Pcg32(std::uint64_t seed, std::uint64_t stream) { reseed(seed, stream); }

    constexpr void reseed(std::uint64_t seed, std::uint64_t stream)
    {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        (*this)();
        state_ += seed;
        (*this)();
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()()
    {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    /// Uniform in [0, 1).
    constexpr double uniform() { return static_cast<double>((*this)()) * 0x1.0p-32; }

    /// Uniform integer in [0, bound), unbiased.
    constexpr std::uint32_t bounded(std::uint32_t bound)
    {
        const std::uint32_t threshold = (0u - bound) % bound;
        for (;;) {
            const std::uint32_t r = (*this)();
            if (r >= threshold)
                return r % bound;
        }
    }

    constexpr std::uint64_t state() const { return state_; }
    constexpr std::uint64_t increment() const { return inc_; }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 1;
};

/// Mixes a seed with extra words into a fresh 64-bit seed (splitmix64 finaliser).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
    std::uint64_t z = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL);
    z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27u)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31u);
}

}  // namespace rmct
