#include "vera/kernels.hpp"
#include "vera/rng.hpp"

namespace vera::kernels {

TransitionCounts sir_step_scalar(std::span<std::uint8_t> states, std::uint64_t counter_base,
                                 TransitionThresholds thresholds) {
  TransitionCounts counts;
  std::uint64_t counter = counter_base;
  for (std::uint8_t& s : states) {
    counter += rng::kGolden;
    if (s == kRecovered) continue;
    const std::uint64_t u = rng::mix64(counter) >> 11;
    if (s == kSusceptible) {
      if (u < thresholds.infect) {
        s = kInfected;
        ++counts.infected;
      }
    } else if (u < thresholds.recover) {
      s = kRecovered;
      ++counts.recovered;
    }
  }
  return counts;
}

}  // namespace vera::kernels
