#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace xlrec {

// 64-bit FNV-1a. Used for seed derivation and content hashing.
inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

using Rng = std::mt19937_64;

// Independent child stream derived from (seed, tag). Components that draw
// from their own child stream stay reproducible regardless of how many
// draws unrelated components make.
inline Rng child_rng(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = fnv1a64(tag);
  h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return Rng(h);
}

}  // namespace xlrec
