#pragma once

#include <cstdint>
#include <random>

namespace valplan {

using Engine = std::mt19937_64;

/// Purposes that own disjoint random substreams.
enum class StreamTag : std::uint64_t {
    MarginalDraw = 1,
    ScoreMatrix = 2,
    Bootstrap = 3,
    PreposteriorData = 4,
    TwoStep = 5,
    Bands = 6,
    Confusion = 7,
    RobbinsMonro = 8,
    Confirmation = 9,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return splitmix64(h ^ c);
}

/// Engine for item `index` of a given purpose; the same (seed, tag, index)
/// always yields the same sequence regardless of which worker runs it.
inline Engine substream(std::uint64_t seed, StreamTag tag, std::uint64_t index,
                        std::uint64_t extra = 0) {
    return Engine{mix_seed(seed, static_cast<std::uint64_t>(tag), index, extra)};
}

/// Uniform on the open interval (0,1).
inline double uniform01(Engine& rng) {
    // 53 random bits, shifted off zero.
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace valplan
