#include "mirc/simd/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace mirc::simd {
namespace {

std::uint64_t count_nonzero_u8_neon(const std::uint8_t* data, std::size_t n) {
  std::uint64_t count = 0;
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const uint8x16_t v = vld1q_u8(data + i);
    // 1 where non-zero, 0 otherwise.
    const uint8x16_t ones = vminq_u8(v, vdupq_n_u8(1));
    count += vaddvq_u8(ones);
  }
  for (; i < n; ++i) count += data[i] != 0;
  return count;
}

double sum_f32_neon(const float* data, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(data + i);
    acc0 = vaddq_f64(acc0, vcvt_f64_f32(vget_low_f32(v)));
    acc1 = vaddq_f64(acc1, vcvt_high_f64_f32(v));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(data[i]);
  return acc;
}

double dot_f32_neon(const float* a, const float* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t va = vld1q_f32(a + i);
    const float32x4_t vb = vld1q_f32(b + i);
    acc0 = vfmaq_f64(acc0, vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
    acc1 = vfmaq_f64(acc1, vcvt_high_f64_f32(va), vcvt_high_f64_f32(vb));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{Isa::Neon, count_nonzero_u8_neon, sum_f32_neon, dot_f32_neon};
  return &table;
}

}  // namespace mirc::simd

#else

namespace mirc::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace mirc::simd

#endif
