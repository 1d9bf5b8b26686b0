#include <random>

#include "doctest.h"
#include "fcm/encoder.hpp"
#include "fcm/errors.hpp"
#include "fcm/trace.hpp"
#include "support.hpp"

using namespace fcm;

namespace {

struct PairInput {
  std::vector<std::int32_t> ctx_ids, cand_ids;
  std::vector<std::uint8_t> ctx_mask, cand_mask;
};

PairInput random_pair(const ModelConfig& cfg, std::size_t vocab, std::mt19937_64& rng) {
  PairInput p;
  p.ctx_mask = testing::prefix_mask(cfg.l_ctx, rng);
  p.cand_mask = testing::prefix_mask(cfg.l_resp, rng);
  std::uniform_int_distribution<std::int32_t> tok(4, static_cast<std::int32_t>(vocab) - 1);
  for (auto m : p.ctx_mask) p.ctx_ids.push_back(m ? tok(rng) : 0);
  for (auto m : p.cand_mask) p.cand_ids.push_back(m ? tok(rng) : 0);
  return p;
}

ModelConfig small(std::size_t layers = 2) {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.n_heads = 2;
  cfg.n_layers = layers;
  cfg.l_ctx = 7;
  cfg.l_resp = 4;
  cfg.embedding_std = 0.5;
  return cfg;
}

encoder::EncodedPair run(ad::Tape& tape, const ParamStore& store, const ModelConfig& cfg, const PairInput& in,
                         Rng* dropout = nullptr, ForwardTrace* trace = nullptr) {
  BoundParams bound(tape, store);
  return encoder::encode_pair(bound, cfg, in.ctx_ids, in.ctx_mask, in.cand_ids, in.cand_mask, dropout, trace);
}

}  // namespace

TEST_CASE("encoder matches the loop reference on the valid positions") {
  std::mt19937_64 rng(31);
  for (std::size_t layers : {0u, 1u, 2u}) {
    const ModelConfig cfg = small(layers);
    for (int trial = 0; trial < 10; ++trial) {
      Rng init(rng());
      ParamStore store;
      encoder::declare_params(store, cfg, 20, init);
      // non-trivial biases and norms
      for (auto& p : store)
        if (p.name.find(".b") != std::string::npos || p.name.find("ln") != std::string::npos)
          p.value = testing::random_tensor(p.value.rows(), p.value.cols(), rng, 0.3);
      const PairInput in = random_pair(cfg, 20, rng);
      ad::Tape tape;
      const auto out = run(tape, store, cfg, in);

      std::vector<std::int32_t> ids{corpus::Vocabulary::kSum};
      std::vector<std::uint8_t> keys{1};
      ids.insert(ids.end(), in.ctx_ids.begin(), in.ctx_ids.end());
      keys.insert(keys.end(), in.ctx_mask.begin(), in.ctx_mask.end());
      ids.insert(ids.end(), in.cand_ids.begin(), in.cand_ids.end());
      keys.insert(keys.end(), in.cand_mask.begin(), in.cand_mask.end());
      const oracle::Mat ref = oracle::encode(store, cfg, ids, keys);

      double worst = 0.0;
      for (std::size_t c = 0; c < cfg.d; ++c) worst = std::max(worst, std::abs(out.summary.value()(0, c) - ref[0][c]));
      for (std::size_t r = 0; r < cfg.l_ctx; ++r)
        for (std::size_t c = 0; c < cfg.d; ++c)
          worst = std::max(worst, std::abs(out.context.value()(r, c) - ref[1 + r][c]));
      for (std::size_t r = 0; r < cfg.l_resp; ++r)
        for (std::size_t c = 0; c < cfg.d; ++c)
          worst = std::max(worst, std::abs(out.candidate.value()(r, c) - ref[1 + cfg.l_ctx + r][c]));
      CHECK(worst <= 1e-10);
    }
  }
}

TEST_CASE("encoder output shapes, masking and determinism") {
  std::mt19937_64 rng(32);
  const ModelConfig cfg = small();
  Rng init(1);
  ParamStore store;
  encoder::declare_params(store, cfg, 20, init);
  const PairInput in = random_pair(cfg, 20, rng);

  ad::Tape t1, t2;
  ForwardTrace trace;
  const auto a = run(t1, store, cfg, in, nullptr, &trace);
  const auto b = run(t2, store, cfg, in);
  CHECK(a.context.rows() == cfg.l_ctx);
  CHECK(a.candidate.rows() == cfg.l_resp);
  CHECK(a.summary.rows() == 1);
  CHECK(a.summary.cols() == cfg.d);
  CHECK(a.context.value() == b.context.value());
  CHECK(a.candidate.value() == b.candidate.value());

  REQUIRE(trace.attention.size() == cfg.n_layers * cfg.n_heads);
  for (const auto& rec : trace.attention) {
    for (std::size_t r = 0; r < rec.weights.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < rec.weights.cols(); ++c) {
        if (!rec.valid(r, c)) CHECK(rec.weights(r, c) == 0.0);
        s += rec.weights(r, c);
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("PAD token ids do not influence valid positions") {
  std::mt19937_64 rng(33);
  const ModelConfig cfg = small();
  Rng init(2);
  ParamStore store;
  encoder::declare_params(store, cfg, 20, init);
  PairInput in = random_pair(cfg, 20, rng);
  in.cand_mask = {1, 1, 0, 0};
  in.cand_ids = {5, 6, 0, 0};
  PairInput other = in;
  other.cand_ids = {5, 6, 9, 11};  // garbage under the mask
  ad::Tape t1, t2;
  const auto a = run(t1, store, cfg, in);
  const auto b = run(t2, store, cfg, other);
  CHECK(a.summary.value() == b.summary.value());
  CHECK(a.context.value() == b.context.value());
}

TEST_CASE("encode_all_candidates: one triple per candidate, duplicates agree") {
  std::mt19937_64 rng(34);
  const ModelConfig cfg = small(1);
  Rng init(3);
  ParamStore store;
  encoder::declare_params(store, cfg, 20, init);
  const PairInput in = random_pair(cfg, 20, rng);
  const PairInput other = random_pair(cfg, 20, rng);
  std::vector<std::span<const std::int32_t>> ids{in.cand_ids, in.cand_ids, other.cand_ids, in.cand_ids};
  std::vector<std::span<const std::uint8_t>> masks{in.cand_mask, in.cand_mask, other.cand_mask, in.cand_mask};
  ad::Tape tape;
  BoundParams bound(tape, store);
  const auto all = encoder::encode_all_candidates(bound, cfg, in.ctx_ids, in.ctx_mask, ids, masks, nullptr);
  REQUIRE(all.size() == 4);
  CHECK(all[0].candidate.value() == all[1].candidate.value());
  CHECK(all[0].context.value() == all[1].context.value());
  for (const auto& e : all) CHECK(e.context.rows() == cfg.l_ctx);
}

TEST_CASE("zero layers is embedding plus position lookup") {
  const ModelConfig cfg = small(0);
  Rng init(4);
  ParamStore store;
  encoder::declare_params(store, cfg, 20, init);
  std::mt19937_64 rng(35);
  const PairInput in = random_pair(cfg, 20, rng);
  ad::Tape tape;
  const auto out = run(tape, store, cfg, in);
  const Tensor& tok = store.at("enc.tok_emb");
  const Tensor& pos = store.at("enc.pos_emb");
  for (std::size_t c = 0; c < cfg.d; ++c) {
    CHECK(out.summary.value()(0, c) == tok(corpus::Vocabulary::kSum, c) + pos(0, c));
    CHECK(out.context.value()(0, c) == tok(static_cast<std::size_t>(in.ctx_ids[0]), c) + pos(1, c));
  }
}

TEST_CASE("dropout only when an rng is passed") {
  ModelConfig cfg = small(1);
  cfg.dropout = 0.5;
  Rng init(5);
  ParamStore store;
  encoder::declare_params(store, cfg, 20, init);
  std::mt19937_64 rng(36);
  const PairInput in = random_pair(cfg, 20, rng);
  ad::Tape t1, t2;
  Rng drop(7);
  const auto plain = run(t1, store, cfg, in);
  const auto dropped = run(t2, store, cfg, in, &drop);
  std::size_t zeros = 0;
  for (double v : dropped.context.value().values()) zeros += v == 0.0;
  CHECK(zeros > 0);
  CHECK(plain.context.value() != dropped.context.value());
}

TEST_CASE("over-length input is rejected") {
  const ModelConfig cfg = small(1);
  Rng init(6);
  ParamStore store;
  encoder::declare_params(store, cfg, 20, init);
  const std::vector<std::int32_t> ids(cfg.l_ctx + 3, 5);
  const std::vector<std::uint8_t> mask(cfg.l_ctx + 3, 1);
  const std::vector<std::int32_t> cids(cfg.l_resp, 5);
  const std::vector<std::uint8_t> cmask(cfg.l_resp, 1);
  ad::Tape tape;
  BoundParams bound(tape, store);
  CHECK_THROWS_AS(encoder::encode_pair(bound, cfg, ids, mask, cids, cmask, nullptr), DimensionError);
}

TEST_CASE("embedding gradients match finite differences at d=8, one layer") {
  const ModelConfig cfg = small(1);
  Rng init(7);
  ParamStore store;
  encoder::declare_params(store, cfg, 12, init);
  std::mt19937_64 rng(37);
  const PairInput in = random_pair(cfg, 12, rng);
  const Tensor w = testing::random_tensor(cfg.l_resp, cfg.d, rng);
  auto objective = [&](ad::Tape& tape, const ParamStore& s) {
    const auto out = run(tape, s, cfg, in);
    return ad::add(ad::sum(ad::mul(out.candidate, tape.constant(w))), ad::sum_squares(out.summary));
  };
  ad::Tape tape;
  BoundParams bound(tape, store);
  const auto out = encoder::encode_pair(bound, cfg, in.ctx_ids, in.ctx_mask, in.cand_ids, in.cand_mask, nullptr);
  const auto loss = ad::add(ad::sum(ad::mul(out.candidate, tape.constant(w))), ad::sum_squares(out.summary));
  const auto grads = bound.gradients(tape.backward(loss));
  const std::size_t emb = store.index_of("enc.tok_emb");
  auto f = [&](const Tensor& table) {
    ParamStore s = store;
    s.at("enc.tok_emb") = table;
    ad::Tape t;
    return objective(t, s).value()[0];
  };
  CHECK(testing::max_rel_error(grads[emb], testing::numeric_gradient(f, store.at("enc.tok_emb"))) < 1e-4);
}

TEST_CASE("parameter count matches the declared tensors") {
  const ModelConfig cfg = small(2);
  Rng init(8);
  ParamStore store;
  encoder::declare_params(store, cfg, 20, init);
  CHECK(store.scalar_count() == encoder::param_count(cfg, 20));
}
