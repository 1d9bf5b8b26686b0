#include <random>

#include "doctest.h"
#include "fcm/errors.hpp"
#include "fcm/head.hpp"
#include "oracle/brute_ranker.hpp"
#include "support.hpp"

using namespace fcm;

TEST_CASE("reasoning concat order and gradient routing") {
  ad::Tape tape;
  const auto a = tape.leaf(Tensor::row({1, 2})), b = tape.leaf(Tensor::row({3, 4})), c = tape.leaf(Tensor::row({5, 6}));
  const auto h = head::reasoning_concat(a, b, c);
  CHECK(h.value() == Tensor::row({1, 2, 3, 4, 5, 6}));
  const Tensor w = Tensor::row({0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  const auto g = tape.backward(ad::sum(ad::mul(h, tape.constant(w))));
  CHECK(g.at(a.id) == Tensor::row({0.1, 0.2}));
  CHECK(g.at(b.id) == Tensor::row({0.3, 0.4}));
  CHECK(g.at(c.id) == Tensor::row({0.5, 0.6}));
  CHECK_THROWS_AS(head::reasoning_concat(a, tape.constant(Tensor::row({1, 2, 3})), c), DimensionError);
}

TEST_CASE("candidate scores: uniform, normalised, shift invariant, arity") {
  std::mt19937_64 rng(61);
  ad::Tape tape;
  const auto w16 = tape.constant(testing::random_tensor(6, 1, rng));
  const auto h = tape.constant(testing::random_tensor(1, 6, rng));
  const Tensor uniform = head::candidate_scores(std::vector<ad::Var>{h, h, h, h}, w16, tape.constant(Tensor::scalar(0.3))).value();
  for (double p : uniform.values()) CHECK(std::abs(p - 0.25) <= 1e-15);

  std::vector<ad::Var> rs;
  for (int i = 0; i < 4; ++i) rs.push_back(tape.constant(testing::random_tensor(1, 6, rng)));
  const Tensor p0 = head::candidate_scores(rs, w16, tape.constant(Tensor::scalar(0.0))).value();
  const Tensor p1 = head::candidate_scores(rs, w16, tape.constant(Tensor::scalar(17.5))).value();
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    sum += p0[i];
    CHECK(std::abs(p0[i] - p1[i]) <= 1e-12);
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  CHECK_THROWS_AS(head::candidate_scores(std::vector<ad::Var>{h}, w16, tape.constant(Tensor::scalar(0))), DimensionError);

  // positive rescale of the logits keeps the argmax
  const auto w_scaled = ad::affine(w16, 3.0, 0.0);
  const Tensor p2 = head::candidate_scores(rs, w_scaled, tape.constant(Tensor::scalar(0.0))).value();
  const auto o0 = head::rank_order(p0.values()), o2 = head::rank_order(p2.values());
  CHECK(o0[0] == o2[0]);
}

TEST_CASE("loss analytic cases") {
  ad::Tape tape;
  const auto sure = tape.constant(Tensor::row({0.0, 1.0, 0.0, 0.0}));
  const std::vector<std::int32_t> gold1{1};
  CHECK(head::loss(std::vector<ad::Var>{sure}, gold1, {}, 0.0).total.value()[0] == 0.0);

  const auto flat = tape.constant(Tensor::row({0.25, 0.25, 0.25, 0.25}));
  const std::vector<std::int32_t> gold2{0, 3};
  CHECK(std::abs(head::loss(std::vector<ad::Var>{flat, flat}, gold2, {}, 0.0).total.value()[0] - std::log(4.0)) <=
        1e-15);

  const auto theta = tape.leaf(Tensor::scalar(2.0));
  const auto l = head::loss(std::vector<ad::Var>{sure}, gold1, std::vector<ad::Var>{theta}, 0.01);
  CHECK(std::abs(l.total.value()[0] - 0.04) <= 1e-15);
  CHECK(std::abs(tape.backward(l.total).at(theta.id)[0] - 0.04) <= 1e-15);

  const auto zero = tape.constant(Tensor::row({1.0, 0.0}));
  const std::vector<std::int32_t> gold3{1};
  const auto clamped = head::loss(std::vector<ad::Var>{zero}, gold3, {}, 0.0);
  CHECK(clamped.clamped == 1);
  CHECK(std::abs(clamped.total.value()[0] + std::log(head::kProbabilityFloor)) <= 1e-12);
  const std::vector<std::int32_t> bad{5};
  CHECK_THROWS_AS(head::loss(std::vector<ad::Var>{zero}, bad, {}, 0.0), DataError);
}

TEST_CASE("one gradient step on the head lowers the loss") {
  std::mt19937_64 rng(62);
  ParamStore store;
  store.add("w16", testing::random_tensor(6, 1, rng));
  store.add("b6", Tensor::scalar(0.0));
  std::vector<Tensor> h;
  for (int i = 0; i < 4; ++i) h.push_back(testing::random_tensor(1, 6, rng));
  const std::vector<std::int32_t> gold{2};
  auto eval = [&](const ParamStore& s, std::vector<Tensor>* grads) {
    ad::Tape tape;
    BoundParams p(tape, s);
    std::vector<ad::Var> rs;
    for (const Tensor& t : h) rs.push_back(tape.constant(t));
    const auto probs = head::candidate_scores(rs, p["w16"], p["b6"]);
    const auto l = head::loss(std::vector<ad::Var>{probs}, gold, {}, 0.0).total;
    if (grads) *grads = p.gradients(tape.backward(l));
    return l.value()[0];
  };
  std::vector<Tensor> g;
  const double before = eval(store, &g);
  for (std::size_t i = 0; i < store.size(); ++i)
    for (std::size_t k = 0; k < g[i].size(); ++k) store[i].value[k] -= 1e-3 * g[i][k];
  CHECK(eval(store, nullptr) < before);
}

TEST_CASE("ranking hand cases") {
  const std::vector<std::vector<double>> top{{0.7, 0.1, 0.1, 0.1}, {0.1, 0.6, 0.2, 0.1}};
  const std::vector<std::int32_t> top_gold{0, 1};
  const auto r = head::rank_and_report(top, top_gold);
  CHECK(r.r_at_1 == 1.0);
  CHECK(r.r_at_2 == 1.0);
  CHECK(r.mrr == 1.0);

  const std::vector<std::vector<double>> second{{0.4, 0.3, 0.2, 0.1}};
  const std::vector<std::int32_t> second_gold{1};
  const auto s = head::rank_and_report(second, second_gold);
  CHECK(s.r_at_1 == 0.0);
  CHECK(s.r_at_2 == 1.0);
  CHECK(s.mrr == 0.5);

  const std::vector<std::vector<double>> three{{0.4, 0.3, 0.2, 0.1}, {0.4, 0.3, 0.2, 0.1}, {0.4, 0.3, 0.2, 0.1}};
  const std::vector<std::int32_t> ranks{0, 1, 3};
  CHECK(std::abs(head::rank_and_report(three, ranks).mrr - 7.0 / 12.0) <= 1e-15);
}

TEST_CASE("ties go to the lower index") {
  const std::vector<double> p{0.3, 0.3, 0.3, 0.1};
  CHECK(head::rank_order(p) == std::vector<std::size_t>{0, 1, 2, 3});
  const std::vector<std::vector<double>> probs{p};
  const std::vector<std::int32_t> gold{2};
  const auto r = head::rank_and_report(probs, gold);
  CHECK(r.per_example[0].gold_rank == 3);
  CHECK(r.per_example[0].predicted == 0);
}

TEST_CASE("metrics agree with the brute-force ranker on random scores with ties") {
  std::mt19937_64 rng(63);
  std::uniform_int_distribution<int> coarse(0, 3);  // few distinct values, so ties are common
  std::uniform_int_distribution<int> pick(0, 3);
  std::vector<std::vector<double>> scores;
  std::vector<int> gold_int;
  std::vector<std::int32_t> gold;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> s(4);
    for (double& v : s) v = coarse(rng) * 0.25;
    scores.push_back(s);
    gold_int.push_back(pick(rng));
    gold.push_back(gold_int.back());
  }
  const auto report = head::rank_and_report(scores, gold);
  const auto brute = oracle::brute_metrics(scores, gold_int);
  CHECK(report.r_at_1 == brute.r_at_1);
  CHECK(report.r_at_2 == brute.r_at_2);
  CHECK(report.mrr == brute.mrr);
  for (std::size_t b = 0; b < scores.size(); ++b)
    CHECK(report.per_example[b].gold_rank == oracle::brute_rank(scores[b], static_cast<std::size_t>(gold[b])));
}

TEST_CASE("unlabeled rows are listed but not scored; JSON round trip") {
  const std::vector<std::vector<double>> probs{{0.1, 0.9}, {0.8, 0.2}};
  const std::vector<std::int32_t> gold{1, -1};
  const auto r = head::rank_and_report(probs, gold);
  CHECK(r.n == 1);
  CHECK(r.per_example.size() == 2);
  CHECK_FALSE(r.per_example[1].gold.has_value());
  const auto j = head::to_json(r);
  for (const char* key : {"r_at_1", "r_at_2", "mrr", "n", "per_example"}) CHECK(j.contains(key));
  CHECK(head::to_json(head::report_from_json(j)) == j);
}

TEST_CASE("head parameter count") {
  ModelConfig cfg;
  cfg.d = 8;
  Rng init(1);
  ParamStore s;
  head::declare_params(s, cfg, init);
  CHECK(s.scalar_count() == 25);
  CHECK(head::param_count(cfg) == 25);
}
