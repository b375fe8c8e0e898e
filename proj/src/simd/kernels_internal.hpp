#pragma once

#include "emm/simd.hpp"

namespace emm::simd::detail {

extern const KernelSet kScalarKernels;

#if defined(EMM_BUILD_AVX2)
extern const KernelSet kAvx2Kernels;
#endif

}  // namespace emm::simd::detail
