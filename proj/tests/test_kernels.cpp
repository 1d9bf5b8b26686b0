#include <stdexcept>
#include <random>
#include <vector>

#include "doctest.h"
#include "fcm/kernels.hpp"

using namespace fcm::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Textbook triple loop over logical indices.
std::vector<double> naive_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                               const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * m + i] : a[i * k + p];
        const double bv = tb ? b[j * k + p] : b[p * n + j];
        c[i * n + j] += av * bv;
      }
  return c;
}

double max_diff(const std::vector<double>& x, const std::vector<double>& y) {
  double w = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) w = std::max(w, std::abs(x[i] - y[i]));
  return w;
}

std::vector<Backend> available() {
  std::vector<Backend> out{Backend::kScalar};
  if (backend_supported(Backend::kAvx2)) out.push_back(Backend::kAvx2);
  return out;
}

}  // namespace

TEST_CASE("gemm matches the triple loop for every transpose combination and odd sizes") {
  std::mt19937_64 rng(11);
  for (Backend be : available()) {
    CAPTURE(backend_name(be));
    const KernelTable& t = table(be);
    for (std::size_t m : {1u, 3u, 7u}) {
      for (std::size_t n : {1u, 4u, 9u}) {
        for (std::size_t k : {1u, 5u, 13u}) {
          for (int flags = 0; flags < 4; ++flags) {
            const bool ta = flags & 1, tb = flags & 2;
            const auto a = random_values(m * k, rng), b = random_values(k * n, rng);
            std::vector<double> c(m * n, 0.0);
            t.gemm(ta, tb, m, n, k, a.data(), b.data(), c.data(), false);
            CHECK(max_diff(c, naive_gemm(ta, tb, m, n, k, a, b)) < 1e-12);

            // accumulate adds onto what is there
            std::vector<double> acc(m * n, 1.5);
            t.gemm(ta, tb, m, n, k, a.data(), b.data(), acc.data(), true);
            auto expect = naive_gemm(ta, tb, m, n, k, a, b);
            for (double& v : expect) v += 1.5;
            CHECK(max_diff(acc, expect) < 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("vector kernels agree across backends") {
  std::mt19937_64 rng(12);
  const KernelTable& ref = table(Backend::kScalar);
  for (Backend be : available()) {
    const KernelTable& t = table(be);
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 17u, 64u, 131u}) {
      CAPTURE(n);
      const auto x = random_values(n, rng), y = random_values(n, rng);
      double expect = 0.0;
      for (std::size_t i = 0; i < n; ++i) expect += x[i] * y[i];
      CHECK(std::abs(t.dot(x.data(), y.data(), n) - expect) < 1e-12);

      std::vector<double> out_t(n), out_r(n);
      t.add(x.data(), y.data(), out_t.data(), n);
      ref.add(x.data(), y.data(), out_r.data(), n);
      CHECK(out_t == out_r);  // single rounding each, so exact
      t.sub(x.data(), y.data(), out_t.data(), n);
      ref.sub(x.data(), y.data(), out_r.data(), n);
      CHECK(out_t == out_r);
      t.mul(x.data(), y.data(), out_t.data(), n);
      ref.mul(x.data(), y.data(), out_r.data(), n);
      CHECK(out_t == out_r);

      std::vector<double> yt = y, yr = y;
      t.axpy(0.37, x.data(), yt.data(), n);
      ref.axpy(0.37, x.data(), yr.data(), n);
      CHECK(max_diff(yt, yr) < 1e-15);
    }
  }
}

TEST_CASE("each backend is deterministic run to run") {
  std::mt19937_64 rng(13);
  const auto a = random_values(37 * 29, rng), b = random_values(29 * 41, rng);
  for (Backend be : available()) {
    std::vector<double> c1(37 * 41), c2(37 * 41);
    table(be).gemm(false, false, 37, 41, 29, a.data(), b.data(), c1.data(), false);
    table(be).gemm(false, false, 37, 41, 29, a.data(), b.data(), c2.data(), false);
    CHECK(c1 == c2);
  }
}

TEST_CASE("dispatcher switches and refuses unsupported backends") {
  const Backend before = active_backend();
  set_backend(Backend::kScalar);
  CHECK(active_backend() == Backend::kScalar);
  CHECK(&active() == &table(Backend::kScalar));
  if (backend_supported(Backend::kAvx2)) {
    set_backend(Backend::kAvx2);
    CHECK(&active() == &table(Backend::kAvx2));
  } else {
    CHECK_THROWS_AS(set_backend(Backend::kAvx2), std::invalid_argument);
  }
  set_backend(before);
  CHECK(backend_name(Backend::kScalar) == "scalar");
}
