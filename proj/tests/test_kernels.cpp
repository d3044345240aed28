#include <cstdint>
#include <vector>

#include "doctest.h"
#include "vera/kernels.hpp"
#include "vera/rng.hpp"

using namespace vera;
using namespace vera::kernels;

namespace {

std::vector<std::uint8_t> random_states(std::size_t n, std::uint64_t seed) {
  rng::SplitMix64 g(seed);
  std::vector<std::uint8_t> s(n);
  for (auto& x : s) x = static_cast<std::uint8_t>(g.below(3));
  return s;
}

// Straight transcription of the per-agent rule.
TransitionCounts reference_step(std::vector<std::uint8_t>& states, std::uint64_t base,
                                TransitionThresholds t) {
  TransitionCounts c;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::uint64_t u = rng::mix64(base + (i + 1) * rng::kGolden) >> 11;
    if (states[i] == kSusceptible && u < t.infect) {
      states[i] = kInfected;
      ++c.infected;
    } else if (states[i] == kInfected && u < t.recover) {
      states[i] = kRecovered;
      ++c.recovered;
    }
  }
  return c;
}

const std::vector<TransitionThresholds> kThresholds = {
    {rng::probability_threshold(0.3), rng::probability_threshold(1 - std::exp(-1.0 / 14))},
    {0, 0},
    {rng::kUnitOne, rng::kUnitOne},
    {rng::probability_threshold(1e-9), rng::probability_threshold(0.999999)},
};

}  // namespace

TEST_CASE("probability threshold is exact at the edges") {
  CHECK(rng::probability_threshold(0) == 0);
  CHECK(rng::probability_threshold(-1) == 0);
  CHECK(rng::probability_threshold(1) == rng::kUnitOne);
  CHECK(rng::probability_threshold(0.5) == rng::kUnitOne / 2);
  // u * 2^-53 < p  <=>  u < T
  const double p = 0.3;
  const std::uint64_t t = rng::probability_threshold(p);
  CHECK(std::ldexp(static_cast<double>(t - 1), -53) < p);
  CHECK_FALSE(std::ldexp(static_cast<double>(t), -53) < p);
}

TEST_CASE("splitmix64 matches the published reference sequence") {
  // First outputs of SplitMix64 seeded with 1234567.
  rng::SplitMix64 g(1234567);
  CHECK(g.next() == 6457827717110365317ULL);
  CHECK(g.next() == 3203168211198807973ULL);
  CHECK(g.next() == 9817491932198370423ULL);
}

TEST_CASE("below stays in range and covers it") {
  rng::SplitMix64 g(3);
  std::vector<int> seen(7);
  for (int i = 0; i < 7000; ++i) {
    const auto v = g.below(7);
    REQUIRE(v < 7);
    ++seen[v];
  }
  for (int c : seen) CHECK(c > 800);
}

TEST_CASE("scalar kernel matches the per-agent rule") {
  for (std::size_t n : {0, 1, 3, 4, 5, 17, 1000, 10007}) {
    for (const auto& t : kThresholds) {
      auto a = random_states(n, n + 11);
      auto b = a;
      const std::uint64_t base = 0xABCDEF12345ULL * (n + 1);
      const auto ca = sir_step_scalar(a, base, t);
      const auto cb = reference_step(b, base, t);
      CHECK(a == b);
      CHECK(ca == cb);
    }
  }
}

TEST_CASE("recovered agents never change") {
  std::vector<std::uint8_t> s(257, kRecovered);
  const auto c = sir_step(s, 99, {rng::kUnitOne, rng::kUnitOne});
  CHECK(c == TransitionCounts{});
  for (auto x : s) CHECK(x == kRecovered);
}

#if defined(VERA_WITH_AVX2)
TEST_CASE("avx2 kernel is bit-identical to scalar") {
  if (!isa_supported(Isa::Avx2)) {
    MESSAGE("AVX2 not supported on this CPU; equivalence not exercised");
    return;
  }
  rng::SplitMix64 g(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = trial < 40 ? static_cast<std::size_t>(trial) : g.below(5000);
    auto a = random_states(n, g.next());
    if (trial % 5 == 0)  // long all-recovered runs exercise block skipping
      for (std::size_t i = 0; i < n / 2; ++i) a[i] = kRecovered;
    auto b = a;
    const std::uint64_t base = g.next();
    const auto& t = trial % 7 == 0 ? kThresholds[trial % kThresholds.size()]
                                   : TransitionThresholds{g.next() >> 11, g.next() >> 11};
    const auto cs = sir_step_scalar(a, base, t);
    const auto cv = sir_step_avx2(b, base, t);
    REQUIRE(a == b);
    REQUIRE(cs == cv);
  }
}
#endif

TEST_CASE("dispatch honors force_isa") {
  force_isa(Isa::Scalar);
  CHECK(active_isa() == Isa::Scalar);
  auto a = random_states(999, 5);
  auto b = a;
  const TransitionThresholds t = kThresholds[0];
  const auto ca = sir_step(a, 77, t);
  force_isa(std::nullopt);
  const auto cb = sir_step(b, 77, t);
  CHECK(a == b);
  CHECK(ca == cb);
  CHECK(isa_supported(Isa::Scalar));
  CHECK(isa_supported(active_isa()));
}
