#include "zipcrt/kernels.hpp"

#include <arm_neon.h>

namespace zipcrt::kernels::neon {

OutcomeMoments moments(const std::int32_t* y, std::size_t n) {
  int64x2_t sum = vdupq_n_s64(0);
  int64x2_t sum_sq = vdupq_n_s64(0);
  int64x2_t zeros = vdupq_n_s64(0);

  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const int32x4_t v = vld1q_s32(y + j);
    const int32x2_t lo = vget_low_s32(v);
    const int32x2_t hi = vget_high_s32(v);
    sum = vpadalq_s32(sum, v);
    sum_sq = vmlal_s32(sum_sq, lo, lo);
    sum_sq = vmlal_s32(sum_sq, hi, hi);
    // ceq yields all-ones per zero lane; shift down to 1
    const uint32x4_t eq = vshrq_n_u32(vceqq_s32(v, vdupq_n_s32(0)), 31);
    zeros = vaddq_s64(zeros, vreinterpretq_s64_u64(vpaddlq_u32(eq)));
  }

  OutcomeMoments m;
  m.count = static_cast<std::int64_t>(n);
  m.sum = vaddvq_s64(sum);
  m.sum_sq = vaddvq_s64(sum_sq);
  m.zeros = vaddvq_s64(zeros);
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
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    const uint16x8_t s16 = vmovl_u8(vld1_u8(structural + j));
    const uint32x4_t s_lo = vmovl_u16(vget_low_u16(s16));
    const uint32x4_t s_hi = vmovl_u16(vget_high_u16(s16));
    const uint32x4_t keep_lo = vceqq_u32(s_lo, vdupq_n_u32(0));
    const uint32x4_t keep_hi = vceqq_u32(s_hi, vdupq_n_u32(0));
    const int32x4_t u_lo = vld1q_s32(poisson + j);
    const int32x4_t u_hi = vld1q_s32(poisson + j + 4);
    vst1q_s32(out + j, vandq_s32(u_lo, vreinterpretq_s32_u32(keep_lo)));
    vst1q_s32(out + j + 4, vandq_s32(u_hi, vreinterpretq_s32_u32(keep_hi)));
  }
  for (; j < n; ++j) out[j] = structural[j] ? 0 : poisson[j];
}

} // namespace zipcrt::kernels::neon
