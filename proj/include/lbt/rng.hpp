#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "lbt/vec3.hpp"

namespace lbt {

/// Derives an independent, reproducible stream from (seed, label).
inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view label = {}) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 1099511628211ull;
  }
  std::mt19937_64 rng(seed ^ h);
  rng.discard(7);
  return rng;
}

/// Uniform double in [0, 1); bit-stable across standard library versions.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform direction via rejection sampling in the cube.
inline Vec3 random_unit_vector(std::mt19937_64& rng) {
  for (;;) {
    Vec3 p{uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
    double n2 = p.norm2();
    if (n2 > 1e-12 && n2 <= 1.0) return p / std::sqrt(n2);
  }
}

}  // namespace lbt
