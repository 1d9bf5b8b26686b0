#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fcm/autodiff.hpp"
#include "fcm/config.hpp"
#include "fcm/params.hpp"
#include "json.hpp"

namespace fcm::head {

void declare_params(ParamStore& store, const ModelConfig& cfg, Rng& rng);
std::size_t param_count(const ModelConfig& cfg);

// [summary ; history ; speaker], each 1 x d.
ad::Var reasoning_concat(ad::Var summary, ad::Var history, ad::Var speaker);

// Softmax over the M logits w16 . H_i + b6; returns 1 x M.
ad::Var candidate_scores(std::span<const ad::Var> reasoning, ad::Var w16, ad::Var b6);

inline constexpr double kProbabilityFloor = 1e-12;

struct Loss {
  ad::Var total;
  ad::Var nll;
  std::size_t clamped = 0;  // gold probabilities floored at kProbabilityFloor
};

// -(1/N) sum_b log p_b[gold_b] + lambda * sum ||theta||^2 over `regularized`.
Loss loss(std::span<const ad::Var> probabilities, std::span<const std::int32_t> gold,
          std::span<const ad::Var> regularized, double lambda);

struct ExampleRanking {
  std::vector<double> probabilities;
  std::size_t predicted = 0;
  std::optional<std::size_t> gold;
  std::size_t gold_rank = 0;  // 1-based, 0 when unlabeled
};

struct RankingReport {
  std::vector<ExampleRanking> per_example;
  double r_at_1 = 0.0;
  double r_at_2 = 0.0;
  double mrr = 0.0;
  std::size_t n = 0;
};

// Candidate indices by descending probability, ties to the lower index.
std::vector<std::size_t> rank_order(std::span<const double> probabilities);

// gold < 0 marks an unlabeled example; those are listed but not scored.
RankingReport rank_and_report(const std::vector<std::vector<double>>& probabilities,
                              std::span<const std::int32_t> gold);

nlohmann::json to_json(const RankingReport& report);
RankingReport report_from_json(const nlohmann::json& j);

}  // namespace fcm::head
