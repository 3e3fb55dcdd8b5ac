#pragma once

// Data-parallel inner loops used by retention ratios and embedding scoring.
//
// Every kernel has a scalar reference implementation and optional vector
// variants. The active variant is chosen once at startup from the CPU
// features, or forced with MIRC_LAB_SIMD=scalar|avx2|neon.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace mirc::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  /// Number of non-zero bytes.
  std::uint64_t (*count_nonzero_u8)(const std::uint8_t* data, std::size_t n);
  /// Sum of float values, accumulated in double.
  double (*sum_f32)(const float* data, std::size_t n);
  /// Dot product accumulated in double.
  double (*dot_f32)(const float* a, const float* b, std::size_t n);
};

const KernelTable& scalar_kernels();
/// Returns nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

/// Kernel table selected for this process.
const KernelTable& active();

/// Overrides the selection (tests and benchmarks). Returns false if the
/// requested variant is unavailable on this machine.
bool force(Isa isa);

// Convenience wrappers over the active table.

inline std::uint64_t count_nonzero(std::span<const std::uint8_t> row) {
  return active().count_nonzero_u8(row.data(), row.size());
}

inline double sum(std::span<const float> row) {
  return active().sum_f32(row.data(), row.size());
}

inline double dot(std::span<const float> a, std::span<const float> b) {
  return active().dot_f32(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

}  // namespace mirc::simd
