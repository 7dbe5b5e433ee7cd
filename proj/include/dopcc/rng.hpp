#pragma once

#include <cstdint>
#include <random>

namespace dopcc {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based stream seed: independent engines for (seed, stream, counter) triples.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t counter = 0) {
    return mix64(mix64(mix64(seed) ^ stream) ^ counter);
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t counter = 0) {
    return std::mt19937_64(stream_seed(seed, stream, counter));
}

// Named streams so that independent consumers never share random numbers.
namespace streams {
inline constexpr std::uint64_t kTrajectory = 1;
inline constexpr std::uint64_t kCfo = 2;
inline constexpr std::uint64_t kCsiNoise = 3;
inline constexpr std::uint64_t kFreqNoise = 4;
inline constexpr std::uint64_t kDesync = 5;
inline constexpr std::uint64_t kPairs = 6;
inline constexpr std::uint64_t kInit = 7;
inline constexpr std::uint64_t kSplit = 8;
}  // namespace streams

}  // namespace dopcc
