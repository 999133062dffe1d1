#pragma once

#include <cstdint>

#include "cdgc/errors.hpp"

namespace cdgc {

/// Deterministic splittable pseudorandom generator (splitmix64).
///
/// The stream depends only on the seed, never on platform or standard
/// library internals, so identical seeds reproduce byte-identical
/// sequences everywhere. split() derives an independent child stream,
/// which is how per-sample and per-purpose generators are created.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) from the top 53 bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw UsageError("Rng::uniform_int: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Independent child generator; advances this stream by one draw.
  Rng split() { return Rng(next_u64() ^ 0x3c79ac492ba7b653ULL); }

 private:
  std::uint64_t state_;
};

}  // namespace cdgc
