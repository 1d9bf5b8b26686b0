#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "fcm/kernels.hpp"

namespace fcm::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(FCM_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  Backend best = cpu_has_avx2() ? Backend::kAvx2 : Backend::kScalar;
  if (const char* env = std::getenv("FCM_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return Backend::kScalar;
    if (want == "avx2" && best == Backend::kAvx2) return Backend::kAvx2;
  }
  return best;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

}  // namespace

bool backend_supported(Backend b) { return b == Backend::kScalar || cpu_has_avx2(); }

const KernelTable& table(Backend b) {
#if defined(FCM_HAVE_AVX2_TU)
  if (b == Backend::kAvx2) return avx2::kTable;
#endif
  if (b == Backend::kAvx2) throw std::invalid_argument("avx2 kernels not compiled in");
  return scalar::kTable;
}

const KernelTable& active() { return table(current().load(std::memory_order_relaxed)); }

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_supported(b)) throw std::invalid_argument("kernel backend not supported on this CPU");
  current().store(b, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) { return b == Backend::kAvx2 ? "avx2" : "scalar"; }

}  // namespace fcm::kernels
