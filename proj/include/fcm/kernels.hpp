#pragma once

// Dense f64 inner loops used by the tensor engine.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2+FMA
// variant. The active table is picked once at startup from CPUID and can be
// overridden with FCM_KERNELS=scalar|avx2 or set_backend(). The variants are
// not bit-identical to each other (FMA and lane-wise reduction order differ)
// but each is deterministic on its own.

#include <cstddef>
#include <string_view>

namespace fcm::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  // C[m x n] (+)= op(A)[m x k] * op(B)[k x n]. A is stored k x m when trans_a,
  // B is stored n x k when trans_b. All row-major and contiguous.
  void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
               const double* b, double* c, bool accumulate);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  void (*sub)(const double* x, const double* y, double* out, std::size_t n);
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
};

bool backend_supported(Backend b);
const KernelTable& table(Backend b);
const KernelTable& active();
Backend active_backend();
// Throws std::invalid_argument if the CPU cannot run b.
void set_backend(Backend b);
std::string_view backend_name(Backend b);

namespace scalar {
extern const KernelTable kTable;
}
#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
extern const KernelTable kTable;
}
#endif

}  // namespace fcm::kernels
