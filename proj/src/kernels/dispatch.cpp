#include <atomic>
#include <cstdlib>
#include <string>

#include "vera/kernels.hpp"

namespace vera::kernels {
namespace {

// -1: detect; otherwise a forced Isa value.
std::atomic<int> g_forced{-1};

Isa detect() {
  if (const char* env = std::getenv("VERA_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::Scalar;
    if (v == "avx2" && isa_supported(Isa::Avx2)) return Isa::Avx2;
  }
  return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

}  // namespace

std::string_view to_string(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(VERA_WITH_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() {
  const int forced = g_forced.load(std::memory_order_relaxed);
  if (forced >= 0) return static_cast<Isa>(forced);
  static const Isa detected = detect();
  return detected;
}

void force_isa(std::optional<Isa> isa) {
  g_forced.store(isa ? static_cast<int>(*isa) : -1, std::memory_order_relaxed);
}

TransitionCounts sir_step(std::span<std::uint8_t> states, std::uint64_t counter_base,
                          TransitionThresholds thresholds) {
#if defined(VERA_WITH_AVX2)
  if (active_isa() == Isa::Avx2) return sir_step_avx2(states, counter_base, thresholds);
#endif
  return sir_step_scalar(states, counter_base, thresholds);
}

}  // namespace vera::kernels
