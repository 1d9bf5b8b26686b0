#include "fcm/kernels.hpp"

namespace fcm::kernels::scalar {
namespace {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  }
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      for (std::size_t t = 0; t < k; ++t) {
        const double av = a[i * k + t];
        const double* brow = b + t * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[j * k + t];
        c[i * n + j] += s;
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t t = 0; t < k; ++t) {
      const double* brow = b + t * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = a[t * m + i];
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += a[t * m + i] * b[j * k + t];
        c[i * n + j] += s;
      }
    }
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void sub(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

}  // namespace

const KernelTable kTable{gemm, dot, axpy, add, sub, mul};

}  // namespace fcm::kernels::scalar
