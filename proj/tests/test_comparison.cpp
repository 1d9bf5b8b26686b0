#include <random>

#include "doctest.h"
#include "fcm/comparison.hpp"
#include "fcm/errors.hpp"
#include "fcm/trace.hpp"
#include "support.hpp"

using namespace fcm;
using V = ComparisonVariant;

namespace {

struct Setup {
  ModelConfig cfg;
  ParamStore store;
  std::vector<Tensor> h;
  std::vector<std::vector<std::uint8_t>> masks;
};

Setup random_setup(std::mt19937_64& rng, std::size_t d, std::size_t m, V variant) {
  Setup s;
  s.cfg.d = d;
  s.cfg.m = m;
  s.cfg.variant = variant;
  Rng init(rng());
  comparison::declare_params(s.store, s.cfg, init);
  for (auto& p : s.store) {
    if (p.name == "cmp.w3" && variant == V::kNoSource) continue;
    p.value = testing::random_tensor(p.value.rows(), p.value.cols(), rng, 0.5);
  }
  std::uniform_int_distribution<std::size_t> len(2, 5);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t l = len(rng);
    s.h.push_back(testing::random_tensor(l, d, rng));
    s.masks.push_back(testing::prefix_mask(l, rng));
  }
  return s;
}

std::vector<Tensor> run(const Setup& s, ForwardTrace* trace = nullptr) {
  ad::Tape tape;
  BoundParams bound(tape, s.store);
  std::vector<ad::Var> enc;
  for (const Tensor& t : s.h) enc.push_back(tape.constant(t));
  std::vector<std::span<const std::uint8_t>> masks(s.masks.begin(), s.masks.end());
  const auto out = comparison::compare_all(enc, masks, comparison::bind(bound, s.cfg), s.cfg.variant, trace);
  std::vector<Tensor> values;
  for (const auto& v : out) values.push_back(v.value());
  return values;
}

double max_diff(const Tensor& t, const oracle::Mat& m) {
  double w = 0.0;
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) w = std::max(w, std::abs(t(r, c) - m[r][c]));
  return w;
}

}  // namespace

TEST_CASE("compare_all matches the loop reference for every variant") {
  std::mt19937_64 rng(41);
  for (V variant : {V::kFull, V::kCoarseGrained, V::kSimpleAdd, V::kNoSource, V::kNoGate}) {
    CAPTURE(to_string(variant));
    for (int trial = 0; trial < 20; ++trial) {
      const Setup s = random_setup(rng, 2 + trial % 5, 3 + trial % 2, variant);
      const auto got = run(s);
      std::vector<oracle::Mat> h;
      for (const Tensor& t : s.h) h.push_back(oracle::to_mat(t));
      for (std::size_t i = 0; i < s.cfg.m; ++i) {
        const auto e = oracle::compared(i, h, s.masks, s.store, variant);
        CHECK(max_diff(got[i], oracle::fused(e, h[i], s.masks[i], s.store, variant)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("paired attention: hand case, zero weights, masking") {
  ad::Tape tape;
  // m = n = d = 2
  const Tensor hi = Tensor::from_rows({{1.0, -0.5}, {0.25, 2.0}});
  const Tensor hj = Tensor::from_rows({{0.5, 1.5}, {-1.0, 0.75}});
  const Tensor w1 = Tensor({6, 1}, std::vector<double>{0.3, -0.2, 0.1, 0.4, -0.5, 0.6});
  const std::vector<std::uint8_t> both{1, 1};
  const Tensor a = comparison::paired_attention(tape.constant(hi), tape.constant(hj), both, tape.constant(w1)).value();
  const auto ref = oracle::paired_attention(oracle::to_mat(hi), oracle::to_mat(hj), both, oracle::to_mat(w1));
  CHECK(max_diff(a, ref) <= 1e-15);
  // a_00 written out: logits for query row 0 against keys 0 and 1
  const double l00 = 0.3 * 1.0 + -0.2 * -0.5 + 0.1 * 0.5 + 0.4 * 1.5 + -0.5 * 1.0 * 0.5 + 0.6 * -0.5 * 1.5;
  const double l01 = 0.3 * 1.0 + -0.2 * -0.5 + 0.1 * -1.0 + 0.4 * 0.75 + -0.5 * 1.0 * -1.0 + 0.6 * -0.5 * 0.75;
  CHECK(std::abs(a(0, 0) - 1.0 / (1.0 + std::exp(l01 - l00))) <= 1e-15);

  std::mt19937_64 rng(1);
  const Tensor keys = testing::random_tensor(3, 2, rng);
  const Tensor uniform = comparison::paired_attention(tape.constant(hi), tape.constant(keys),
                                                      std::vector<std::uint8_t>{1, 1, 0}, tape.constant(Tensor({6, 1})))
                             .value();
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(uniform(r, 0) == 0.5);
    CHECK(uniform(r, 1) == 0.5);
    CHECK(uniform(r, 2) == 0.0);
  }
  CHECK_THROWS_AS(comparison::paired_attention(tape.constant(hi), tape.constant(hj), std::vector<std::uint8_t>{0, 0},
                                               tape.constant(w1)),
                  InvalidMaskError);
}

TEST_CASE("paired correlation layout") {
  ad::Tape tape;
  const Tensor h = Tensor::from_rows({{2.0, 3.0}});
  const Tensor a = Tensor::from_rows({{1.0}});
  const Tensor out = comparison::paired_correlation(tape.constant(h), tape.constant(a), tape.constant(h)).value();
  CHECK(out == Tensor::from_rows({{0.0, 0.0, 4.0, 9.0}}));

  // rows of H_j all equal: the attended summary is that row whatever A is
  const Tensor hj = Tensor::from_rows({{1.0, -1.0}, {1.0, -1.0}, {1.0, -1.0}});
  const Tensor attn = Tensor::from_rows({{0.2, 0.3, 0.5}});
  const Tensor c = comparison::paired_correlation(tape.constant(h), tape.constant(attn), tape.constant(hj)).value();
  CHECK(std::abs(c[0] - 1.0) < 1e-15);
  CHECK(std::abs(c[1] - 4.0) < 1e-15);
}

TEST_CASE("response level compare: zero weights, range, arity") {
  std::mt19937_64 rng(42);
  ad::Tape tape;
  const auto p1 = tape.constant(testing::random_tensor(2, 4, rng));
  const auto p2 = tape.constant(testing::random_tensor(2, 4, rng));
  const Tensor b2 = Tensor::row({0.3, -0.7});
  const Tensor out =
      comparison::response_level_compare(std::vector<ad::Var>{p1, p2}, 2, tape.constant(Tensor({8, 2})), tape.constant(b2))
          .value();
  for (std::size_t r = 0; r < 2; ++r) {
    // libm and the compiler's constant folding may differ in the last bit
    CHECK(std::abs(out(r, 0) - std::tanh(0.3)) <= 1e-15);
    CHECK(std::abs(out(r, 1) - std::tanh(-0.7)) <= 1e-15);
  }
  const Tensor big = comparison::response_level_compare(
                         std::vector<ad::Var>{p1, p2}, 2, tape.constant(testing::random_tensor(8, 2, rng, 0.5)),
                         tape.constant(b2))
                         .value();
  for (double v : big.values()) CHECK((v > -1.0 && v < 1.0));
  CHECK_THROWS_AS(comparison::response_level_compare(std::vector<ad::Var>{p1}, 2, tape.constant(Tensor({8, 2})),
                                                     tape.constant(b2)),
                  DimensionError);
}

TEST_CASE("gate fuse identities") {
  std::mt19937_64 rng(43);
  ad::Tape tape;
  const std::vector<std::uint8_t> rows{1, 1, 1};
  const Tensor h = testing::random_tensor(3, 2, rng), e = testing::random_tensor(3, 2, rng);
  comparison::Weights w;
  w.w3 = tape.constant(testing::random_tensor(4, 2, rng));
  w.b3 = tape.constant(testing::random_tensor(1, 2, rng));
  auto fuse = [&](const Tensor& ev, const Tensor& hv, V v) {
    return comparison::gate_fuse(tape.constant(ev), tape.constant(hv), rows, w, v).value();
  };
  for (V v : {V::kFull, V::kNoSource, V::kNoGate}) {
    const Tensor same = fuse(h, h, v);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(std::abs(same[i] - h[i]) <= 1e-15);
  }
  const Tensor twice = fuse(h, h, V::kSimpleAdd);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(twice[i] == 2.0 * h[i]);

  comparison::Weights zero{{}, {}, {}, tape.constant(Tensor({4, 2})), tape.constant(Tensor({1, 2}))};
  const Tensor half = comparison::gate_fuse(tape.constant(e), tape.constant(h), rows, zero, V::kFull).value();
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(std::abs(half[i] - (e[i] + h[i]) / 2.0) <= 1e-15);

  for (V v : {V::kFull, V::kNoSource}) {
    const Tensor out = fuse(e, h, v);
    for (std::size_t i = 0; i < h.size(); ++i) {
      CHECK(out[i] >= std::min(e[i], h[i]));
      CHECK(out[i] <= std::max(e[i], h[i]));
    }
  }
  CHECK(fuse(e, h, V::kNoGate) == e);
  CHECK_THROWS_AS(comparison::gate_fuse(tape.constant(e), tape.constant(Tensor({2, 2})), rows, w, V::kFull),
                  DimensionError);
}

TEST_CASE("identical candidates give identical fused outputs") {
  std::mt19937_64 rng(44);
  Setup s = random_setup(rng, 4, 4, V::kFull);
  for (std::size_t i = 1; i < 4; ++i) {
    s.h[i] = s.h[0];
    s.masks[i] = s.masks[0];
  }
  const auto out = run(s);
  for (std::size_t i = 1; i < 4; ++i) CHECK(out[i] == out[0]);
}

TEST_CASE("padding rows are zero and attention is row-stochastic") {
  std::mt19937_64 rng(45);
  const Setup s = random_setup(rng, 4, 3, V::kFull);
  ForwardTrace trace;
  const auto out = run(s, &trace);
  for (std::size_t i = 0; i < s.cfg.m; ++i)
    for (std::size_t r = 0; r < s.masks[i].size(); ++r)
      if (!s.masks[i][r])
        for (std::size_t c = 0; c < s.cfg.d; ++c) CHECK(out[i](r, c) == 0.0);
  CHECK(trace.attention.size() == 6);
  for (const auto& rec : trace.attention)
    for (std::size_t r = 0; r < rec.weights.rows(); ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < rec.weights.cols(); ++c) sum += rec.weights(r, c);
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  for (const auto& g : trace.gates)
    for (double v : g.gate.values()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("every comparison parameter gets a nonzero gradient") {
  std::mt19937_64 rng(46);
  for (V variant : {V::kFull, V::kCoarseGrained, V::kNoSource}) {
    const Setup s = random_setup(rng, 3, 3, variant);
    ad::Tape tape;
    BoundParams bound(tape, s.store);
    std::vector<ad::Var> enc;
    for (const Tensor& t : s.h) enc.push_back(tape.constant(t));
    std::vector<std::span<const std::uint8_t>> masks(s.masks.begin(), s.masks.end());
    const auto out = comparison::compare_all(enc, masks, comparison::bind(bound, s.cfg), variant);
    ad::Var total = ad::sum_squares(out[0]);
    for (std::size_t i = 1; i < out.size(); ++i) total = ad::add(total, ad::sum_squares(out[i]));
    const auto grads = bound.gradients(tape.backward(total));
    for (std::size_t p = 0; p < s.store.size(); ++p) {
      CAPTURE(s.store[p].name);
      double norm = 0.0;
      for (double g : grads[p].values()) norm += g * g;
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("parameter shapes follow the variant") {
  ModelConfig cfg;
  cfg.d = 4;
  cfg.m = 4;
  Rng init(1);
  ParamStore full, coarse, plain;
  comparison::declare_params(full, cfg, init);
  CHECK(full.at("cmp.w2").rows() == 2 * 4 * 3);
  cfg.variant = V::kCoarseGrained;
  comparison::declare_params(coarse, cfg, init);
  CHECK(coarse.at("cmp.w2").rows() == 4 * 3);
  CHECK_FALSE(coarse.contains("cmp.w1"));
  CHECK(coarse.contains("cmp.w3"));
  cfg.variant = V::kSimpleAdd;
  comparison::declare_params(plain, cfg, init);
  CHECK_FALSE(plain.contains("cmp.w3"));
  cfg.variant = V::kFull;
  CHECK(full.scalar_count() == comparison::param_count(cfg));
}
