#include "mirc/simd/kernels.hpp"

namespace mirc::simd {
namespace {

std::uint64_t count_nonzero_u8_scalar(const std::uint8_t* data, std::size_t n) {
  std::uint64_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += data[i] != 0;
  return count;
}

double sum_f32_scalar(const float* data, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(data[i]);
  return acc;
}

double dot_f32_scalar(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::Scalar, count_nonzero_u8_scalar, sum_f32_scalar, dot_f32_scalar};
  return table;
}

}  // namespace mirc::simd
