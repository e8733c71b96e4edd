// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "pvfd/kernels.hpp"

namespace pvfd::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

// c[0:n] += a0*r0 + a1*r1 + a2*r2 + a3*r3
inline void axpy4(const double* coef, const double* r0, const double* r1, const double* r2,
                  const double* r3, double* c, std::size_t n) {
  const __m256d a0 = _mm256_set1_pd(coef[0]);
  const __m256d a1 = _mm256_set1_pd(coef[1]);
  const __m256d a2 = _mm256_set1_pd(coef[2]);
  const __m256d a3 = _mm256_set1_pd(coef[3]);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_loadu_pd(c + j);
    acc = _mm256_fmadd_pd(a0, _mm256_loadu_pd(r0 + j), acc);
    acc = _mm256_fmadd_pd(a1, _mm256_loadu_pd(r1 + j), acc);
    acc = _mm256_fmadd_pd(a2, _mm256_loadu_pd(r2 + j), acc);
    acc = _mm256_fmadd_pd(a3, _mm256_loadu_pd(r3 + j), acc);
    _mm256_storeu_pd(c + j, acc);
  }
  for (; j < n; ++j) {
    c[j] += coef[0] * r0[j] + coef[1] * r1[j] + coef[2] * r2[j] + coef[3] * r3[j];
  }
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      axpy4(ai + p, b + p * n, b + (p + 1) * n, b + (p + 2) * n, b + (p + 3) * n, ci, n);
    }
    for (; p < k; ++p) axpy(ai[p], b + p * n, ci, n);
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* b0 = b + i * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const double coef[4] = {a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p],
                              a[(i + 3) * k + p]};
      axpy4(coef, b0, b1, b2, b3, c + p * n, n);
    }
  }
  for (; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) axpy(a[i * k + p], b + i * n, c + p * n, n);
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    for (std::size_t j = 0; j < k; ++j) c[i * k + j] += dot(ai, b + j * n, n);
  }
}

// Cephes-style: x = n ln2 + r with |r| <= ln2/2, exp(r) from a Pade form,
// then scale by 2^n through the exponent bits.
__m256d exp4(__m256d x) {
  const __m256d hi = _mm256_set1_pd(709.78);
  const __m256d lo = _mm256_set1_pd(-708.39);
  const __m256d under = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  // Operand order lets NaN pass through.
  x = _mm256_max_pd(lo, _mm256_min_pd(hi, x));
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634073599)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125e-1), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212e-6), r);
  const __m256d rr = _mm256_mul_pd(r, r);
  __m256d p = _mm256_fmadd_pd(rr, _mm256_set1_pd(1.26177193074810590878e-4),
                              _mm256_set1_pd(3.02994407707441961300e-2));
  p = _mm256_mul_pd(r, _mm256_fmadd_pd(p, rr, _mm256_set1_pd(9.99999999999999999910e-1)));
  __m256d q = _mm256_fmadd_pd(rr, _mm256_set1_pd(3.00198505138664455042e-6),
                              _mm256_set1_pd(2.52448340349684104192e-3));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.27265548208155028766e-1));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.00000000000000000009e0));
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(e, _mm256_set1_pd(2.0), _mm256_set1_pd(1.0));
  const __m128i ni = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_cvtepi32_epi64(ni);
  bits = _mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52);
  e = _mm256_mul_pd(e, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(under, e);
}

void exp_inplace(double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, exp4(_mm256_loadu_pd(x + i)));
  if (i < n) {
    double tail[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t j = i; j < n; ++j) tail[j - i] = x[j];
    _mm256_storeu_pd(tail, exp4(_mm256_loadu_pd(tail)));
    for (std::size_t j = i; j < n; ++j) x[j] = tail[j - i];
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::kAvx2, "avx2", dot, axpy, gemm_nn, gemm_tn, gemm_nt,
                                 exp_inplace};
  return &table;
}

}  // namespace pvfd::kernels
