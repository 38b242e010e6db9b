// AVX2 + FMA variants. This file is compiled with -mavx2 -mfma and only ever
// called after the dispatcher has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>

#include "tckin/simd/kernels.hpp"

namespace tckin::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// crow[0..n) += alpha * brow[0..n)
inline void row_axpy(std::size_t n, double alpha, const double* brow, double* crow) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256d c0 = _mm256_loadu_pd(crow + j);
    __m256d c1 = _mm256_loadu_pd(crow + j + 4);
    __m256d c2 = _mm256_loadu_pd(crow + j + 8);
    __m256d c3 = _mm256_loadu_pd(crow + j + 12);
    c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), c0);
    c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j + 4), c1);
    c2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j + 8), c2);
    c3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j + 12), c3);
    _mm256_storeu_pd(crow + j, c0);
    _mm256_storeu_pd(crow + j + 4, c1);
    _mm256_storeu_pd(crow + j + 8, c2);
    _mm256_storeu_pd(crow + j + 12, c3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c = _mm256_loadu_pd(crow + j);
    c = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), c);
    _mm256_storeu_pd(crow + j, c);
  }
  for (; j < n; ++j) crow[j] += alpha * brow[j];
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

// Register-blocked C tile of 16 columns held across the whole k loop.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n + j;
      __m256d c0 = _mm256_loadu_pd(crow);
      __m256d c1 = _mm256_loadu_pd(crow + 4);
      __m256d c2 = _mm256_loadu_pd(crow + 8);
      __m256d c3 = _mm256_loadu_pd(crow + 12);
      const double* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d va = _mm256_set1_pd(arow[p]);
        const double* brow = b + p * n + j;
        c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow), c0);
        c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + 4), c1);
        c2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + 8), c2);
        c3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + 12), c3);
      }
      _mm256_storeu_pd(crow, c0);
      _mm256_storeu_pd(crow + 4, c1);
      _mm256_storeu_pd(crow + 8, c2);
      _mm256_storeu_pd(crow + 12, c3);
    }
  }
  if (j == n) return;
  const std::size_t rest = n - j;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n + j;
    for (std::size_t p = 0; p < k; ++p) row_axpy(rest, a[i * k + p], b + p * n + j, crow);
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      if (api != 0.0) row_axpy(n, api, brow, c + i * n);
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = dot(k, arow, b + j * k);
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) { row_axpy(n, alpha, x, y); }

template <typename Op, typename Tail>
inline void binary(std::size_t n, const double* x, const double* y, double* out, Op op, Tail tail) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, op(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = tail(x[i], y[i]);
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  binary(n, x, y, out, [](__m256d u, __m256d v) { return _mm256_add_pd(u, v); },
         [](double u, double v) { return u + v; });
}

void sub(std::size_t n, const double* x, const double* y, double* out) {
  binary(n, x, y, out, [](__m256d u, __m256d v) { return _mm256_sub_pd(u, v); },
         [](double u, double v) { return u - v; });
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  binary(n, x, y, out, [](__m256d u, __m256d v) { return _mm256_mul_pd(u, v); },
         [](double u, double v) { return u * v; });
}

void mul_acc(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d o = _mm256_loadu_pd(out + i);
    o = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), o);
    _mm256_storeu_pd(out + i, o);
  }
  for (; i < n; ++i) out[i] += x[i] * y[i];
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace

const Kernels& avx2_table() {
  static const Kernels table{Isa::kAvx2, "avx2", gemm_nn, gemm_tn, gemm_nt, axpy, dot,
                             add,        sub,    mul,     mul_acc, scale};
  return table;
}

}  // namespace tckin::simd
