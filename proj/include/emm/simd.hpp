#pragma once

// Data-parallel inner loops used by the dense network, the kernel Gram
// builders and the optimizer. Every routine has a portable scalar reference
// and, where the build and CPU allow, a vectorized variant. The active set is
// picked once at first use from the CPU feature bits; the EMM_SIMD environment
// variable ("scalar" or "avx2") overrides the choice.

#include <cstddef>
#include <string_view>
#include <vector>

namespace emm::simd {

struct AdamCoefficients {
  double learning_rate;
  double beta1;
  double beta2;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
  double epsilon;
};

struct KernelSet {
  std::string_view name;

  // C[M x N] += A[M x K] * B[K x N], all row-major with explicit leading dims.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);

  double (*dot)(const double* x, const double* y, std::size_t n);

  double (*squared_distance)(const double* x, const double* y, std::size_t n);

  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // In-place bias-corrected adaptive-moment update of n parameters.
  void (*adam_update)(double* weights, double* first, double* second,
                      const double* grad, std::size_t n,
                      const AdamCoefficients& coeff);
};

enum class Isa { scalar, avx2 };

const KernelSet& scalar_kernels();

// Null when the build lacks the AVX2 translation unit or the CPU lacks
// AVX2+FMA.
const KernelSet* avx2_kernels();

// The set every caller in the library goes through.
const KernelSet& active();

Isa active_isa();

// Forces a kernel set; returns false (and changes nothing) if unavailable.
bool set_active(Isa isa);

std::vector<Isa> available_isas();

std::string_view isa_name(Isa isa);

// Flushes subnormal results and operands to zero on this thread while alive.
// Long training runs otherwise slow down several-fold once optimizer moments
// of never-active inputs decay into the subnormal range.
class FlushDenormals {
 public:
  FlushDenormals();
  ~FlushDenormals();
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace emm::simd
