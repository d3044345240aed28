#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace vera::kernels {

// Agent states, one byte each.
inline constexpr std::uint8_t kSusceptible = 0;
inline constexpr std::uint8_t kInfected = 1;
inline constexpr std::uint8_t kRecovered = 2;

struct TransitionThresholds {
  std::uint64_t infect = 0;   // from rng::probability_threshold
  std::uint64_t recover = 0;
};

struct TransitionCounts {
  std::int64_t infected = 0;   // S -> I this step
  std::int64_t recovered = 0;  // I -> R this step

  bool operator==(const TransitionCounts&) const = default;
};

// One synchronous day for every agent. Agent i draws
//   u = mix64(counter_base + (i + 1) * kGolden) >> 11
// and moves S -> I when u < infect, I -> R when u < recover. Recovered agents
// never change. All variants produce identical states and counts.
TransitionCounts sir_step_scalar(std::span<std::uint8_t> states, std::uint64_t counter_base,
                                 TransitionThresholds thresholds);
#if defined(VERA_WITH_AVX2)
TransitionCounts sir_step_avx2(std::span<std::uint8_t> states, std::uint64_t counter_base,
                               TransitionThresholds thresholds);
#endif

enum class Isa : std::uint8_t { Scalar, Avx2 };
std::string_view to_string(Isa isa);

bool isa_supported(Isa isa);
// Best supported variant, unless overridden by force_isa() or the
// VERA_SIMD=scalar|avx2 environment variable.
Isa active_isa();
// Pins the dispatch target (tests and benchmarks). nullopt restores detection.
void force_isa(std::optional<Isa> isa);

TransitionCounts sir_step(std::span<std::uint8_t> states, std::uint64_t counter_base,
                          TransitionThresholds thresholds);

}  // namespace vera::kernels
