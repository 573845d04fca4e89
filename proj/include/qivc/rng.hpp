#pragma once

#include <array>
#include <cstdint>

namespace qivc {

/// Reproducible pseudo-random source.
///
/// Bits come from xoshiro256** whose 256-bit state is filled from the seed
/// by splitmix64. Uniform doubles use the top 53 bits; Gaussian draws use the
/// Box-Muller transform, returning the cosine branch first and caching the
/// sine branch for the next call. The sequence for a given seed is the same
/// on every platform with IEEE-754 doubles and a correctly rounded libm.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1).
  double uniform() noexcept;
  /// Standard normal.
  double normal() noexcept;
  /// True with probability `p_true`.
  bool bernoulli(double p_true) noexcept { return uniform() < p_true; }
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Child stream seeded from one draw of this stream.
  Rng fork() noexcept;
  /// Keyed stream that depends only on (seed, stream).
  static Rng derive(std::uint64_t seed, std::uint64_t stream) noexcept;

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace qivc
