#pragma once

#include <cstdint>
#include <limits>
#include <random>

// Portable draws: the standard distributions differ across library implementations,
// and every seeded result here must be byte-stable.
namespace deirank::rng {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b)
{
    return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

/// Uniform in [0, bound).
inline std::uint64_t below(std::mt19937_64 & gen, std::uint64_t bound)
{
    auto const max = std::numeric_limits<std::uint64_t>::max();
    auto const limit = max - max % bound;
    std::uint64_t x = 0;
    do {
        x = gen();
    } while (x >= limit);
    return x % bound;
}

/// Uniform in [0, 1) with 53 bits.
inline double unit(std::mt19937_64 & gen)
{
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

} // namespace deirank::rng
