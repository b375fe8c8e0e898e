// AVX2 + FMA variants. Compiled with -mavx2 -mfma and only reached after the
// dispatcher has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "emm/simd.hpp"
#include "kernels_internal.hpp"

namespace emm::simd::detail {

namespace {

constexpr std::size_t kBlockK = 256;
constexpr std::size_t kBlockM = 128;
constexpr std::size_t kRowsPerTile = 4;
constexpr std::size_t kVecWidth = 4;

inline __m256i tail_mask(std::size_t remaining) {
  const std::int64_t r = static_cast<std::int64_t>(remaining);
  return _mm256_set_epi64x(r > 3 ? -1 : 0, r > 2 ? -1 : 0, r > 1 ? -1 : 0,
                           r > 0 ? -1 : 0);
}

// Register tile of Rows x (Vecs * 4) columns of C. When Masked, the last vector
// only covers the columns enabled in `mask`.
template <int Rows, int Vecs, bool Masked>
inline void tile(std::size_t kc, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc,
                 __m256i mask) {
  __m256d acc[Rows][Vecs];
  for (int r = 0; r < Rows; ++r) {
    for (int v = 0; v < Vecs; ++v) {
      double* cp = c + r * ldc + v * kVecWidth;
      acc[r][v] = (Masked && v == Vecs - 1) ? _mm256_maskload_pd(cp, mask)
                                            : _mm256_loadu_pd(cp);
    }
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const double* bp = b + p * ldb;
    __m256d bv[Vecs];
    for (int v = 0; v < Vecs; ++v) {
      bv[v] = (Masked && v == Vecs - 1)
                  ? _mm256_maskload_pd(bp + v * kVecWidth, mask)
                  : _mm256_loadu_pd(bp + v * kVecWidth);
    }
    for (int r = 0; r < Rows; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
      for (int v = 0; v < Vecs; ++v) acc[r][v] = _mm256_fmadd_pd(av, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < Rows; ++r) {
    for (int v = 0; v < Vecs; ++v) {
      double* cp = c + r * ldc + v * kVecWidth;
      if (Masked && v == Vecs - 1) {
        _mm256_maskstore_pd(cp, mask, acc[r][v]);
      } else {
        _mm256_storeu_pd(cp, acc[r][v]);
      }
    }
  }
}

template <int Vecs, bool Masked>
inline void column_panel(std::size_t mc, std::size_t kc, const double* a,
                         std::size_t lda, const double* b, std::size_t ldb,
                         double* c, std::size_t ldc, __m256i mask) {
  std::size_t i = 0;
  for (; i + kRowsPerTile <= mc; i += kRowsPerTile) {
    tile<4, Vecs, Masked>(kc, a + i * lda, lda, b, ldb, c + i * ldc, ldc, mask);
  }
  switch (mc - i) {
    case 3: tile<3, Vecs, Masked>(kc, a + i * lda, lda, b, ldb, c + i * ldc, ldc, mask); break;
    case 2: tile<2, Vecs, Masked>(kc, a + i * lda, lda, b, ldb, c + i * ldc, ldc, mask); break;
    case 1: tile<1, Vecs, Masked>(kc, a + i * lda, lda, b, ldb, c + i * ldc, ldc, mask); break;
    default: break;
  }
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc) {
  const __m256i full = _mm256_set1_epi64x(-1);
  for (std::size_t kb = 0; kb < k; kb += kBlockK) {
    const std::size_t kc = std::min(kBlockK, k - kb);
    for (std::size_t mb = 0; mb < m; mb += kBlockM) {
      const std::size_t mc = std::min(kBlockM, m - mb);
      const double* a_blk = a + mb * lda + kb;
      const double* b_blk = b + kb * ldb;
      double* c_blk = c + mb * ldc;
      std::size_t j = 0;
      for (; j + 12 <= n; j += 12) {
        column_panel<3, false>(mc, kc, a_blk, lda, b_blk + j, ldb, c_blk + j, ldc, full);
      }
      const std::size_t rest = n - j;
      if (rest == 0) continue;
      const __m256i mask = tail_mask(rest % kVecWidth == 0 ? kVecWidth : rest % kVecWidth);
      const bool partial = rest % kVecWidth != 0;
      const std::size_t vecs = (rest + kVecWidth - 1) / kVecWidth;
      if (vecs == 3) {
        if (partial) column_panel<3, true>(mc, kc, a_blk, lda, b_blk + j, ldb, c_blk + j, ldc, mask);
        else column_panel<3, false>(mc, kc, a_blk, lda, b_blk + j, ldb, c_blk + j, ldc, full);
      } else if (vecs == 2) {
        if (partial) column_panel<2, true>(mc, kc, a_blk, lda, b_blk + j, ldb, c_blk + j, ldc, mask);
        else column_panel<2, false>(mc, kc, a_blk, lda, b_blk + j, ldb, c_blk + j, ldc, full);
      } else {
        if (partial) column_panel<1, true>(mc, kc, a_blk, lda, b_blk + j, ldb, c_blk + j, ldc, mask);
        else column_panel<1, false>(mc, kc, a_blk, lda, b_blk + j, ldb, c_blk + j, ldc, full);
      }
    }
  }
}

inline double horizontal_sum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    i += 4;
  }
  double acc = horizontal_sum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double squared_distance_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  if (i + 4 <= n) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    i += 4;
  }
  double acc = horizontal_sum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

// Same operation order as the scalar reference and no fused multiply-adds, so
// the two variants agree bit for bit.
void adam_update_avx2(double* w, double* m1, double* m2, const double* g,
                      std::size_t n, const AdamCoefficients& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d lr = _mm256_set1_pd(c.learning_rate);
  const __m256d eps = _mm256_set1_pd(c.epsilon);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m1 + i)),
                                     _mm256_mul_pd(omb1, gv));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(m2 + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m1 + i, mv);
    _mm256_storeu_pd(m2 + i, vv);
    const __m256d m_hat = _mm256_div_pd(mv, bc1);
    const __m256d v_hat = _mm256_div_pd(vv, bc2);
    const __m256d step =
        _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i), step));
  }
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (; i < n; ++i) {
    m1[i] = c.beta1 * m1[i] + one_minus_b1 * g[i];
    m2[i] = c.beta2 * m2[i] + one_minus_b2 * (g[i] * g[i]);
    const double m_hat = m1[i] / c.bias_correction1;
    const double v_hat = m2[i] / c.bias_correction2;
    w[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

const KernelSet kAvx2Kernels{
    "avx2",    gemm_nn_avx2,     dot_avx2, squared_distance_avx2,
    axpy_avx2, adam_update_avx2,
};

}  // namespace emm::simd::detail
