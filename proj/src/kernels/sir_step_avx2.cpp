#include <immintrin.h>

#include <bit>
#include <cstring>

#include "vera/kernels.hpp"
#include "vera/rng.hpp"

namespace vera::kernels {
namespace {

// 64x64 -> low 64 bit multiply by a constant; AVX2 has no native epi64 mullo.
inline __m256i mullo64(__m256i a, __m256i b) {
  const __m256i lo = _mm256_mul_epu32(a, b);
  const __m256i a_hi_b_lo = _mm256_mul_epu32(_mm256_srli_epi64(a, 32), b);
  const __m256i a_lo_b_hi = _mm256_mul_epu32(a, _mm256_srli_epi64(b, 32));
  const __m256i cross = _mm256_slli_epi64(_mm256_add_epi64(a_hi_b_lo, a_lo_b_hi), 32);
  return _mm256_add_epi64(lo, cross);
}

inline __m256i mix64(__m256i z) {
  const __m256i m1 = _mm256_set1_epi64x(static_cast<long long>(0xBF58476D1CE4E5B9ULL));
  const __m256i m2 = _mm256_set1_epi64x(static_cast<long long>(0x94D049BB133111EBULL));
  z = mullo64(_mm256_xor_si256(z, _mm256_srli_epi64(z, 30)), m1);
  z = mullo64(_mm256_xor_si256(z, _mm256_srli_epi64(z, 27)), m2);
  return _mm256_xor_si256(z, _mm256_srli_epi64(z, 31));
}

}  // namespace

TransitionCounts sir_step_avx2(std::span<std::uint8_t> states, std::uint64_t counter_base,
                               TransitionThresholds thresholds) {
  constexpr std::uint64_t g = rng::kGolden;
  const std::size_t n = states.size();
  std::uint8_t* data = states.data();

  // Lane j of `counter` holds the counter of agent i + j.
  __m256i counter = _mm256_setr_epi64x(static_cast<long long>(counter_base + 1 * g),
                                       static_cast<long long>(counter_base + 2 * g),
                                       static_cast<long long>(counter_base + 3 * g),
                                       static_cast<long long>(counter_base + 4 * g));
  const __m256i step = _mm256_set1_epi64x(static_cast<long long>(4 * g));
  // Thresholds are <= 2^53 and draws < 2^53, so signed compares are exact.
  const __m256i t_infect = _mm256_set1_epi64x(static_cast<long long>(thresholds.infect));
  const __m256i t_recover = _mm256_set1_epi64x(static_cast<long long>(thresholds.recover));
  const __m256i s_code = _mm256_set1_epi64x(kSusceptible);
  const __m256i i_code = _mm256_set1_epi64x(kInfected);
  const __m256i one = _mm256_set1_epi64x(1);

  TransitionCounts counts;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    std::uint32_t packed;
    std::memcpy(&packed, data + i, 4);
    // Skip blocks with nobody left to transition.
    if (packed == 0x02020202u) {
      counter = _mm256_add_epi64(counter, step);
      continue;
    }
    const __m256i st = _mm256_cvtepu8_epi64(_mm_cvtsi32_si128(static_cast<int>(packed)));
    const __m256i u = _mm256_srli_epi64(mix64(counter), 11);
    counter = _mm256_add_epi64(counter, step);

    const __m256i is_s = _mm256_cmpeq_epi64(st, s_code);
    const __m256i is_i = _mm256_cmpeq_epi64(st, i_code);
    const __m256i thr =
        _mm256_or_si256(_mm256_and_si256(is_s, t_infect), _mm256_and_si256(is_i, t_recover));
    const __m256i hit = _mm256_cmpgt_epi64(thr, u);
    const int hit_mask = _mm256_movemask_pd(_mm256_castsi256_pd(hit));
    if (hit_mask == 0) continue;

    const int s_mask = _mm256_movemask_pd(_mm256_castsi256_pd(is_s));
    counts.infected += std::popcount(static_cast<unsigned>(hit_mask & s_mask));
    counts.recovered += std::popcount(static_cast<unsigned>(hit_mask & ~s_mask));

    const __m256i next = _mm256_add_epi64(st, _mm256_and_si256(hit, one));
    alignas(32) std::uint64_t lanes[4];
    _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), next);
    for (int j = 0; j < 4; ++j) data[i + static_cast<std::size_t>(j)] = static_cast<std::uint8_t>(lanes[j]);
  }

  if (i < n) {
    const TransitionCounts tail =
        sir_step_scalar(states.subspan(i), counter_base + static_cast<std::uint64_t>(i) * g, thresholds);
    counts.infected += tail.infected;
    counts.recovered += tail.recovered;
  }
  return counts;
}

}  // namespace vera::kernels
