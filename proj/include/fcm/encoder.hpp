#pragma once

// Joint encoder over [SUM; context; candidate].
//
// A small post-norm transformer: token + learned position embeddings, then
// n_layers of multi-head self-attention and a ReLU feed-forward block, each
// followed by a residual connection and layer norm. PAD positions are masked
// out as attention keys. The SUM slot's final state is the pair summary.

#include <cstdint>
#include <span>
#include <vector>

#include "fcm/autodiff.hpp"
#include "fcm/config.hpp"
#include "fcm/params.hpp"
#include "fcm/trace.hpp"

namespace fcm::encoder {

struct EncodedPair {
  ad::Var context;    // l_ctx x d
  ad::Var candidate;  // l_resp x d
  ad::Var summary;    // 1 x d
};

void declare_params(ParamStore& store, const ModelConfig& cfg, std::size_t vocab_size, Rng& rng);
std::size_t param_count(const ModelConfig& cfg, std::size_t vocab_size);

// Dropout on the final hidden states when `dropout` is non-null.
// Throws DimensionError when the pair does not fit cfg.max_positions().
EncodedPair encode_pair(const BoundParams& params, const ModelConfig& cfg, std::span<const std::int32_t> context_ids,
                        std::span<const std::uint8_t> context_mask, std::span<const std::int32_t> candidate_ids,
                        std::span<const std::uint8_t> candidate_mask, Rng* dropout, ForwardTrace* trace = nullptr);

// One encode_pair per candidate of batch row `b`.
std::vector<EncodedPair> encode_all_candidates(const BoundParams& params, const ModelConfig& cfg,
                                               std::span<const std::int32_t> context_ids,
                                               std::span<const std::uint8_t> context_mask,
                                               std::span<const std::span<const std::int32_t>> candidate_ids,
                                               std::span<const std::span<const std::uint8_t>> candidate_masks,
                                               Rng* dropout, ForwardTrace* trace = nullptr);

}  // namespace fcm::encoder
