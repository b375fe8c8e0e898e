#include <cmath>

#include "emm/simd.hpp"
#include "kernels_internal.hpp"

namespace emm::simd::detail {

namespace {

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * ldc;
    const double* a_row = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a_row[p];
      const double* b_row = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double squared_distance_scalar(const double* x, const double* y,
                               std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void adam_update_scalar(double* w, double* m1, double* m2, const double* g,
                        std::size_t n, const AdamCoefficients& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m1[i] = c.beta1 * m1[i] + one_minus_b1 * g[i];
    m2[i] = c.beta2 * m2[i] + one_minus_b2 * (g[i] * g[i]);
    const double m_hat = m1[i] / c.bias_correction1;
    const double v_hat = m2[i] / c.bias_correction2;
    w[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

const KernelSet kScalarKernels{
    "scalar",           gemm_nn_scalar,    dot_scalar, squared_distance_scalar,
    axpy_scalar,        adam_update_scalar,
};

}  // namespace emm::simd::detail
