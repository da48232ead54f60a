#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace roodso {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based sub-seed: the same (seed, path) always yields the same stream,
/// independent of how many other streams were drawn.
inline std::uint64_t sub_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
  return Rng(sub_seed(seed, path));
}

// Stream tags, so sub-seeds stay stable when unrelated config changes.
namespace stream {
inline constexpr std::uint64_t meta_sources = 1;
inline constexpr std::uint64_t meta_tests = 2;
inline constexpr std::uint64_t lhs = 3;
inline constexpr std::uint64_t row_seeds = 4;
inline constexpr std::uint64_t validation_split = 5;
inline constexpr std::uint64_t experiment = 6;
inline constexpr std::uint64_t instance = 7;
}  // namespace stream

}  // namespace roodso
