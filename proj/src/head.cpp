#include "fcm/head.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "fcm/errors.hpp"

namespace fcm::head {

void declare_params(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  store.add("head.w16", xavier_uniform(3 * cfg.d, 1, rng));
  store.add("head.b6", Tensor(Shape{1, 1}));
}

std::size_t param_count(const ModelConfig& cfg) { return 3 * cfg.d + 1; }

ad::Var reasoning_concat(ad::Var summary, ad::Var history, ad::Var speaker) {
  for (const ad::Var& v : {summary, history, speaker}) {
    if (v.rows() != 1 || v.cols() != summary.cols()) {
      throw DimensionError("reasoning_concat: expected three 1 x d rows, got " + to_string(v.value().shape()));
    }
  }
  return ad::concat_cols({summary, history, speaker});
}

ad::Var candidate_scores(std::span<const ad::Var> reasoning, ad::Var w16, ad::Var b6) {
  if (reasoning.size() < 2) {
    throw DimensionError("candidate_scores: need at least 2 candidates, got " + std::to_string(reasoning.size()));
  }
  std::vector<ad::Var> logits;
  logits.reserve(reasoning.size());
  for (const ad::Var& h : reasoning) logits.push_back(ad::add(ad::matmul(h, w16), b6));
  const ad::Var row = ad::concat_cols(logits);
  return ad::masked_softmax_rows(row, Mask(1, reasoning.size(), true));
}

Loss loss(std::span<const ad::Var> probabilities, std::span<const std::int32_t> gold,
          std::span<const ad::Var> regularized, double lambda) {
  if (probabilities.empty() || probabilities.size() != gold.size()) {
    throw DimensionError("loss: need one gold index per probability row");
  }
  Loss out;
  ad::Var nll_sum;
  for (std::size_t b = 0; b < probabilities.size(); ++b) {
    const ad::Var& p = probabilities[b];
    if (gold[b] < 0 || static_cast<std::size_t>(gold[b]) >= p.cols()) {
      throw DataError("loss: gold index " + std::to_string(gold[b]) + " invalid for " + std::to_string(p.cols()) +
                      " candidates");
    }
    const ad::Var lp = ad::log_clamped(ad::element(p, 0, static_cast<std::size_t>(gold[b])), kProbabilityFloor,
                                       &out.clamped);
    nll_sum = b == 0 ? lp : ad::add(nll_sum, lp);
  }
  out.nll = ad::affine(nll_sum, -1.0 / static_cast<double>(probabilities.size()), 0.0);
  out.total = out.nll;
  if (lambda != 0.0) {
    for (const ad::Var& theta : regularized) {
      out.total = ad::add(out.total, ad::affine(ad::sum_squares(theta), lambda, 0.0));
    }
  }
  return out;
}

std::vector<std::size_t> rank_order(std::span<const double> probabilities) {
  std::vector<std::size_t> order(probabilities.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probabilities[a] != probabilities[b]) return probabilities[a] > probabilities[b];
    return a < b;
  });
  return order;
}

RankingReport rank_and_report(const std::vector<std::vector<double>>& probabilities,
                              std::span<const std::int32_t> gold) {
  if (probabilities.size() != gold.size()) throw DimensionError("rank_and_report: probabilities and gold differ");
  RankingReport report;
  double hit1 = 0.0, hit2 = 0.0, rr = 0.0;
  for (std::size_t b = 0; b < probabilities.size(); ++b) {
    ExampleRanking ex;
    ex.probabilities = probabilities[b];
    const auto order = rank_order(ex.probabilities);
    ex.predicted = order.empty() ? 0 : order[0];
    if (gold[b] >= 0) {
      ex.gold = static_cast<std::size_t>(gold[b]);
      const auto pos = std::find(order.begin(), order.end(), *ex.gold);
      if (pos == order.end()) throw DataError("rank_and_report: gold index outside candidate list");
      ex.gold_rank = static_cast<std::size_t>(pos - order.begin()) + 1;
      hit1 += ex.gold_rank <= 1 ? 1.0 : 0.0;
      hit2 += ex.gold_rank <= 2 ? 1.0 : 0.0;
      rr += 1.0 / static_cast<double>(ex.gold_rank);
      ++report.n;
    }
    report.per_example.push_back(std::move(ex));
  }
  if (report.n > 0) {
    const double n = static_cast<double>(report.n);
    report.r_at_1 = hit1 / n;
    report.r_at_2 = hit2 / n;
    report.mrr = rr / n;
  }
  return report;
}

nlohmann::json to_json(const RankingReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& ex : report.per_example) {
    nlohmann::json e{{"probabilities", ex.probabilities}, {"predicted", ex.predicted}};
    if (ex.gold) {
      e["gold"] = *ex.gold;
      e["gold_rank"] = ex.gold_rank;
    } else {
      e["gold"] = nullptr;
    }
    per.push_back(std::move(e));
  }
  return nlohmann::json{
      {"r_at_1", report.r_at_1}, {"r_at_2", report.r_at_2}, {"mrr", report.mrr}, {"n", report.n}, {"per_example", per}};
}

RankingReport report_from_json(const nlohmann::json& j) {
  RankingReport r;
  r.r_at_1 = j.at("r_at_1").get<double>();
  r.r_at_2 = j.at("r_at_2").get<double>();
  r.mrr = j.at("mrr").get<double>();
  r.n = j.at("n").get<std::size_t>();
  for (const auto& e : j.at("per_example")) {
    ExampleRanking ex;
    ex.probabilities = e.at("probabilities").get<std::vector<double>>();
    ex.predicted = e.at("predicted").get<std::size_t>();
    if (!e.at("gold").is_null()) {
      ex.gold = e.at("gold").get<std::size_t>();
      ex.gold_rank = e.at("gold_rank").get<std::size_t>();
    }
    r.per_example.push_back(std::move(ex));
  }
  return r;
}

}  // namespace fcm::head
