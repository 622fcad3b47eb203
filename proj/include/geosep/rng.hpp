#pragma once

#include <cstdint>
#include <random>

namespace geosep {

/// SplitMix64 finalizer; used to derive decorrelated seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Independent generator for item `index` of a job seeded with `seed`.
/// Results depend only on (seed, stream, index), never on scheduling.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    std::uint64_t s = mix64(seed ^ mix64(stream * 0x632be59bd9b4e019ULL + 1) ^ mix64(index + 0x1234567ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
    return std::mt19937_64(seq);
}

// Stream identifiers, fixed so that adding a stage does not perturb others.
namespace streams {
inline constexpr std::uint64_t kStimulus = 1;
inline constexpr std::uint64_t kRig = 2;
inline constexpr std::uint64_t kLandmarks = 3;
inline constexpr std::uint64_t kEigen = 4;
inline constexpr std::uint64_t kSolver = 5;
inline constexpr std::uint64_t kProbes = 6;
inline constexpr std::uint64_t kSpherePatch = 7;
}  // namespace streams

}  // namespace geosep
