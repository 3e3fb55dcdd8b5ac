#include <atomic>
#include <cstdlib>
#include <string>

#include "mirc/simd/kernels.hpp"

namespace mirc::simd {
namespace {

const KernelTable* detect() {
  const char* env = std::getenv("MIRC_LAB_SIMD");
  const std::string want = env ? env : "";
  if (want == "scalar") return &scalar_kernels();
  if (want == "avx2") {
    if (auto* t = avx2_kernels()) return t;
  } else if (want == "neon") {
    if (auto* t = neon_kernels()) return t;
  }
  if (auto* t = avx2_kernels()) return t;
  if (auto* t = neon_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{detect()};
  return current;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

bool force(Isa isa) {
  const KernelTable* table = nullptr;
  switch (isa) {
    case Isa::Scalar: table = &scalar_kernels(); break;
    case Isa::Avx2: table = avx2_kernels(); break;
    case Isa::Neon: table = neon_kernels(); break;
  }
  if (table == nullptr) return false;
  slot().store(table, std::memory_order_release);
  return true;
}

}  // namespace mirc::simd
