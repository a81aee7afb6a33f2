#pragma once

#include <cstdint>

namespace tnfdt {

// Deterministic xoshiro256** generator.
//
// The 256-bit state is expanded from the 64-bit seed with SplitMix64
// (increment 0x9E3779B97F4A7C15, finalizer multipliers 0xBF58476D1CE4E5B9 and
// 0x94D049BB133111EB, shifts 30/27/31). The output function is
// rotl(s1 * 5, 7) * 9 with state update shifts 17 and rotation 45.
// All derived draws use integer arithmetic or IEEE operations whose results
// are fixed by the 64-bit stream, so the same seed gives the same sequence on
// every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() noexcept;

  // Standard normal via Box-Muller; the second variate is cached.
  double normal01() noexcept;

  // Uniform on {0, ..., k-1}; throws DomainError for k == 0.
  std::uint64_t int_below(std::uint64_t k);

  // Independent generator for a sub-task. Derived from (seed, task) only, so
  // it does not depend on how many draws the parent has made.
  Rng split(std::uint64_t task) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

// SplitMix64 finalizer; exposed for seed derivation.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace tnfdt
