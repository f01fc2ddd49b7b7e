#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace mcblock {

using Rng = std::mt19937_64;

// Uniform double in [0, 1). Derived straight from the generator output so
// the draw sequence does not depend on the standard library's distribution
// implementation.
inline double uniform_double(Rng& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

// Uniform index in [0, n). n must be > 0.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  std::size_t i = std::size_t(uniform_double(rng) * double(n));
  return i < n ? i : n - 1;
}

// Uniform int in [lo, hi] inclusive.
inline int uniform_int(Rng& rng, int lo, int hi) {
  return lo + int(uniform_index(rng, std::size_t(hi - lo + 1)));
}

}  // namespace mcblock
