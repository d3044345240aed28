#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

// Platform-independent random numbers for the agent engines.
//
// Every draw is the SplitMix64 finalizer applied to a 64-bit counter, so the
// n-th draw of a stream is a pure function of (stream key, n). This lets the
// SIR kernel compute draws for many agents in parallel lanes while producing
// exactly the bits of the sequential generator.

namespace vera::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
inline constexpr std::uint64_t kUnitBits = 53;
inline constexpr std::uint64_t kUnitOne = std::uint64_t{1} << kUnitBits;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Key of the counter stream used by a run with the given seed.
constexpr std::uint64_t stream_key(std::uint64_t seed) { return mix64(seed ^ 0x5EED5EED5EED5EEDULL); }

// Seed of ensemble member k: member 0 runs with the base seed itself, member
// k >= 1 with mix64(base + k * kGolden).
constexpr std::uint64_t member_seed(std::uint64_t base, std::size_t k) {
  return k == 0 ? base : mix64(base + static_cast<std::uint64_t>(k) * kGolden);
}

// Integer threshold T such that a 53-bit draw u satisfies u * 2^-53 < p
// exactly when u < T.
inline std::uint64_t probability_threshold(double p) {
  if (!(p > 0.0)) return 0;
  if (p >= 1.0) return kUnitOne;
  return static_cast<std::uint64_t>(std::ceil(std::ldexp(p, static_cast<int>(kUnitBits))));
}

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t key) : state_(key) {}

  constexpr std::uint64_t next() {
    state_ += kGolden;
    return mix64(state_);
  }
  constexpr std::uint64_t next_unit_bits() { return next() >> (64 - kUnitBits); }
  double uniform() { return std::ldexp(static_cast<double>(next_unit_bits()), -static_cast<int>(kUnitBits)); }
  bool bernoulli(std::uint64_t threshold) { return next_unit_bits() < threshold; }
  // Integer in [0, n) by multiply-shift.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

}  // namespace vera::rng
