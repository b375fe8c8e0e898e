#include <atomic>
#include <cstdlib>
#include <string_view>

#include "emm/simd.hpp"
#include "kernels_internal.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <xmmintrin.h>
#define EMM_HAVE_MXCSR 1
#endif

namespace emm::simd {

namespace {

bool cpu_has_avx2() {
#if defined(EMM_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelSet* pick_initial() {
  const KernelSet* avx2 = avx2_kernels();
  if (const char* env = std::getenv("EMM_SIMD")) {
    const std::string_view want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2 != nullptr) return avx2;
  }
  return avx2 != nullptr ? avx2 : &scalar_kernels();
}

std::atomic<const KernelSet*>& current() {
  static std::atomic<const KernelSet*> set{pick_initial()};
  return set;
}

}  // namespace

const KernelSet& scalar_kernels() { return detail::kScalarKernels; }

const KernelSet* avx2_kernels() {
#if defined(EMM_BUILD_AVX2)
  static const bool supported = cpu_has_avx2();
  return supported ? &detail::kAvx2Kernels : nullptr;
#else
  return nullptr;
#endif
}

const KernelSet& active() { return *current().load(std::memory_order_acquire); }

Isa active_isa() {
  return &active() == &scalar_kernels() ? Isa::scalar : Isa::avx2;
}

bool set_active(Isa isa) {
  const KernelSet* target = isa == Isa::scalar ? &scalar_kernels() : avx2_kernels();
  if (target == nullptr) return false;
  current().store(target, std::memory_order_release);
  return true;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::scalar};
  if (avx2_kernels() != nullptr) out.push_back(Isa::avx2);
  return out;
}

std::string_view isa_name(Isa isa) { return isa == Isa::scalar ? "scalar" : "avx2"; }

#if defined(EMM_HAVE_MXCSR)
// FTZ (bit 15) and DAZ (bit 6).
constexpr unsigned kFlushBits = 0x8040;

FlushDenormals::FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | kFlushBits); }
FlushDenormals::~FlushDenormals() { _mm_setcsr(saved_); }
#else
FlushDenormals::FlushDenormals() = default;
FlushDenormals::~FlushDenormals() = default;
#endif

}  // namespace emm::simd
