#include <immintrin.h>

#include "fcm/kernels.hpp"

namespace fcm::kernels::avx2 {
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

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  if (!accumulate) {
    std::size_t i = 0;
    for (; i + 4 <= m * n; i += 4) _mm256_storeu_pd(c + i, _mm256_setzero_pd());
    for (; i < m * n; ++i) c[i] = 0.0;
  }
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t t = 0; t < k; ++t) axpy(a[i * k + t], b + t * n, c + i * n, n);
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t t = 0; t < k; ++t) {
      for (std::size_t i = 0; i < m; ++i) axpy(a[t * m + i], b + t * n, c + i * n, n);
    }
  } else {
    // Rare path (unused by the tensor engine); strided access defeats vector loads.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += a[t * m + i] * b[j * k + t];
        c[i * n + j] += s;
      }
    }
  }
}

template <typename VecOp, typename ScalarOp>
inline void binary(const double* x, const double* y, double* out, std::size_t n, VecOp vop, ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = sop(x[i], y[i]);
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  binary(x, y, out, n, [](__m256d p, __m256d q) { return _mm256_add_pd(p, q); },
         [](double p, double q) { return p + q; });
}

void sub(const double* x, const double* y, double* out, std::size_t n) {
  binary(x, y, out, n, [](__m256d p, __m256d q) { return _mm256_sub_pd(p, q); },
         [](double p, double q) { return p - q; });
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  binary(x, y, out, n, [](__m256d p, __m256d q) { return _mm256_mul_pd(p, q); },
         [](double p, double q) { return p * q; });
}

}  // namespace

const KernelTable kTable{gemm, dot, axpy, add, sub, mul};

}  // namespace fcm::kernels::avx2
