#pragma once

// Bidirectional matching between a fused candidate and (a) the whole
// context, (b) the responder's own context rows, each reduced to one
// d-vector by masked max pooling and a sigmoid gate.

#include <cstdint>
#include <span>
#include <utility>

#include "fcm/autodiff.hpp"
#include "fcm/config.hpp"
#include "fcm/params.hpp"
#include "fcm/trace.hpp"

namespace fcm::consistency {

using RowMask = std::span<const std::uint8_t>;

struct MatchWeights {
  ad::Var a_to_b;  // bilinear weight for a's queries over b's keys
  ad::Var b_to_a;
  ad::Var proj_a;  // applied to the b-summary attached to each a row
  ad::Var proj_b;
};

struct GateWeights {
  ad::Var w_x;
  ad::Var w_y;
  ad::Var bias;
};

struct BlockWeights {
  MatchWeights match;
  GateWeights gate;
};

// prefix is "hist" or "spk".
void declare_params(ParamStore& store, const ModelConfig& cfg, const char* prefix, Rng& rng);
std::size_t param_count(const ModelConfig& cfg);
BlockWeights bind(const BoundParams& params, const char* prefix);

// A_ab = softmax(H_a W_ab H_b^T) over valid b rows; H_a_to_b = relu(A_ab H_b P_a),
// and symmetrically for b. Throws InvalidMaskError if either side is empty.
std::pair<ad::Var, ad::Var> bidirectional_match(ad::Var h_a, RowMask mask_a, ad::Var h_b, RowMask mask_b,
                                                const MatchWeights& w, ForwardTrace* trace = nullptr);

// e_x, e_y = masked column max; g = sigmoid(e_x W_x + e_y W_y + b);
// returns g * e_x + (1 - g) * e_y as a 1 x d row.
ad::Var pooled_gate_fuse(ad::Var h_x, RowMask mask_x, ad::Var h_y, RowMask mask_y, const GateWeights& w,
                         ForwardTrace* trace = nullptr);

ad::Var history_consistency(ad::Var h_context, RowMask context_mask, ad::Var h_candidate, RowMask candidate_mask,
                            const BlockWeights& w, ForwardTrace* trace = nullptr);

// speaker_mask selects the responder's rows of h_context (see
// corpus::speaker_history_rows for the empty-history fallback).
ad::Var speaker_consistency(ad::Var h_context, RowMask speaker_mask, ad::Var h_candidate, RowMask candidate_mask,
                            const BlockWeights& w, ForwardTrace* trace = nullptr);

}  // namespace fcm::consistency
