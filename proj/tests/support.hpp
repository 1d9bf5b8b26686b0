#pragma once

// Shared fixtures: random tensors, a test-local central-difference
// gradient, and random scoring-path instances.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fcm/autodiff.hpp"
#include "fcm/config.hpp"
#include "fcm/encoder.hpp"
#include "fcm/model.hpp"
#include "fcm/params.hpp"
#include "oracle/reference_fcm.hpp"

namespace testing {

inline fcm::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  fcm::Tensor t(fcm::Shape{rows, cols});
  for (double& v : t.values()) v = n(rng);
  return t;
}

// d f / d x by central differences, one coordinate at a time.
inline fcm::Tensor numeric_gradient(const std::function<double(const fcm::Tensor&)>& f, fcm::Tensor x,
                                    double h = 1e-5) {
  fcm::Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_rel_error(const fcm::Tensor& a, const fcm::Tensor& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Valid prefix of random length in [1, n], padding after it.
inline std::vector<std::uint8_t> prefix_mask(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(1, n);
  const std::size_t valid = len(rng);
  std::vector<std::uint8_t> m(n, 0);
  std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(valid), 1);
  return m;
}

// Random encodings, masks and parameters for score_encodings.
struct ScoringInstance {
  fcm::ModelConfig cfg;
  fcm::ParamStore params;
  oracle::Inputs inputs;
};

inline ScoringInstance random_scoring_instance(std::mt19937_64& rng, fcm::ModelConfig cfg) {
  std::uniform_int_distribution<std::size_t> lc(3, 8), lr(2, 6);
  cfg.l_ctx = lc(rng);
  cfg.l_resp = lr(rng);
  cfg.n_heads = 1;
  ScoringInstance s{cfg, {}, {}};
  fcm::Rng init(rng());
  fcm::FcmModel model(cfg, 8, init);
  s.params = model.params();
  // Non-zero biases so every term is exercised.
  for (auto& p : s.params) {
    if (p.name.rfind("enc.", 0) == 0) continue;
    p.value = random_tensor(p.value.rows(), p.value.cols(), rng, 0.5);
  }
  auto& in = s.inputs;
  in.context_mask = prefix_mask(cfg.l_ctx, rng);
  in.speaker_mask.assign(cfg.l_ctx, 0);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < cfg.l_ctx; ++i) in.speaker_mask[i] = in.context_mask[i] && coin(rng);
  if (std::none_of(in.speaker_mask.begin(), in.speaker_mask.end(), [](auto v) { return v; })) in.speaker_mask[0] = 1;
  for (std::size_t i = 0; i < cfg.m; ++i) {
    in.context.push_back(oracle::to_mat(random_tensor(cfg.l_ctx, cfg.d, rng)));
    in.candidate.push_back(oracle::to_mat(random_tensor(cfg.l_resp, cfg.d, rng)));
    in.summary.push_back(oracle::to_mat(random_tensor(1, cfg.d, rng))[0]);
    in.candidate_masks.push_back(prefix_mask(cfg.l_resp, rng));
  }
  return s;
}

inline fcm::Tensor to_tensor(const oracle::Mat& m) {
  fcm::Tensor t(fcm::Shape{m.size(), m[0].size()});
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) t(r, c) = m[r][c];
  return t;
}

// The engine's answer for the same instance, on a fresh tape.
inline std::vector<double> engine_probabilities(const ScoringInstance& s, fcm::ForwardTrace* trace = nullptr) {
  fcm::ad::Tape tape;
  fcm::BoundParams bound(tape, s.params);
  std::vector<fcm::encoder::EncodedPair> enc;
  for (std::size_t i = 0; i < s.cfg.m; ++i) {
    enc.push_back({tape.constant(to_tensor(s.inputs.context[i])), tape.constant(to_tensor(s.inputs.candidate[i])),
                   tape.constant(to_tensor({s.inputs.summary[i]}))});
  }
  std::vector<std::span<const std::uint8_t>> masks(s.inputs.candidate_masks.begin(), s.inputs.candidate_masks.end());
  const fcm::FcmModel model(s.cfg, 8, s.params);
  const auto p = model.score_encodings(bound, enc, s.inputs.context_mask, s.inputs.speaker_mask, masks, trace);
  return {p.value().values().begin(), p.value().values().end()};
}

}  // namespace testing
