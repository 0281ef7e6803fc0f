#include "zipcrt/kernels.hpp"

#include <immintrin.h>

#include <cstring>

namespace zipcrt::kernels::avx2 {

namespace {

inline std::int64_t hsum_epi64(__m256i v) {
  alignas(32) std::int64_t lanes[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), v);
  return lanes[0] + lanes[1] + lanes[2] + lanes[3];
}

} // namespace

OutcomeMoments moments(const std::int32_t* y, std::size_t n) {
  __m256i sum = _mm256_setzero_si256();
  __m256i sum_sq = _mm256_setzero_si256();
  __m256i zeros = _mm256_setzero_si256();
  const __m256i zero = _mm256_setzero_si256();

  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(y + j));
    const __m256i lo = _mm256_cvtepi32_epi64(_mm256_castsi256_si128(v));
    const __m256i hi = _mm256_cvtepi32_epi64(_mm256_extracti128_si256(v, 1));
    sum = _mm256_add_epi64(sum, _mm256_add_epi64(lo, hi));
    sum_sq = _mm256_add_epi64(sum_sq, _mm256_add_epi64(_mm256_mul_epi32(lo, lo),
                                                       _mm256_mul_epi32(hi, hi)));
    // cmpeq yields -1 per zero lane
    const __m256i eq = _mm256_cmpeq_epi32(v, zero);
    zeros = _mm256_sub_epi64(zeros, _mm256_cvtepi32_epi64(_mm256_castsi256_si128(eq)));
    zeros = _mm256_sub_epi64(zeros, _mm256_cvtepi32_epi64(_mm256_extracti128_si256(eq, 1)));
  }

  OutcomeMoments m;
  m.count = static_cast<std::int64_t>(n);
  m.sum = hsum_epi64(sum);
  m.sum_sq = hsum_epi64(sum_sq);
  m.zeros = hsum_epi64(zeros);
  for (; j < n; ++j) {
    const std::int64_t v = y[j];
    m.sum += v;
    m.sum_sq += v * v;
    m.zeros += v == 0;
  }
  return m;
}

void compose(const std::uint8_t* structural, const std::int32_t* poisson, std::int32_t* out,
             std::size_t n) {
  const __m256i zero = _mm256_setzero_si256();
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    std::int64_t packed;
    std::memcpy(&packed, structural + j, sizeof packed);
    const __m256i s = _mm256_cvtepu8_epi32(_mm_cvtsi64_si128(packed));
    const __m256i keep = _mm256_cmpeq_epi32(s, zero);
    const __m256i u = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(poisson + j));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + j), _mm256_and_si256(keep, u));
  }
  for (; j < n; ++j) out[j] = structural[j] ? 0 : poisson[j];
}

} // namespace zipcrt::kernels::avx2
