#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fcm/autodiff.hpp"
#include "fcm/config.hpp"
#include "fcm/corpus.hpp"
#include "fcm/encoder.hpp"
#include "fcm/head.hpp"
#include "fcm/params.hpp"
#include "fcm/trace.hpp"

namespace fcm {

using RowMask = std::span<const std::uint8_t>;

// Everything the scoring path reads for one dialogue.
struct ExampleView {
  std::span<const std::int32_t> context_ids;
  RowMask context_mask;
  std::vector<std::uint8_t> speaker_rows;  // after the empty-history fallback
  bool speaker_fallback = false;
  std::vector<std::span<const std::int32_t>> candidate_ids;
  std::vector<RowMask> candidate_masks;
  std::int32_t gold = -1;
};

ExampleView view_of(const corpus::Batch& batch, std::size_t row);

class FcmModel {
 public:
  // Fresh parameters. Components switched off in cfg keep their parameters
  // but are frozen and skipped in the forward pass.
  FcmModel(ModelConfig cfg, std::size_t vocab_size, Rng& rng);
  // Restored parameters; names and shapes must match a fresh model.
  FcmModel(ModelConfig cfg, std::size_t vocab_size, ParamStore params);

  const ModelConfig& config() const noexcept { return cfg_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  static std::size_t expected_param_count(const ModelConfig& cfg, std::size_t vocab_size);

  // Comparison, consistency and prediction on top of per-candidate
  // encodings. Returns 1 x M probabilities.
  ad::Var score_encodings(const BoundParams& params, std::span<const encoder::EncodedPair> encodings,
                          RowMask context_mask, RowMask speaker_mask, std::span<const RowMask> candidate_masks,
                          ForwardTrace* trace = nullptr) const;

  ad::Var forward(const BoundParams& params, const ExampleView& ex, Rng* dropout, ForwardTrace* trace = nullptr) const;

  // Mean NLL over `rows` plus lambda * ||theta||^2 over the trainable parameters.
  head::Loss batch_loss(const BoundParams& params, const corpus::Batch& batch, std::span<const std::size_t> rows,
                        double lambda, Rng* dropout, std::vector<ad::Var>* probabilities = nullptr) const;

  // Candidate probabilities per batch row, dropout off.
  std::vector<std::vector<double>> predict(const corpus::Batch& batch) const;

 private:
  ModelConfig cfg_;
  std::size_t vocab_size_;
  ParamStore params_;
};

}  // namespace fcm
