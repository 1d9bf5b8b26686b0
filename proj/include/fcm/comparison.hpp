#pragma once

// Fine-grained response comparison.
//
// Each candidate r_i attends word-by-word to every other candidate r_j. The
// attended summary of r_j is turned into difference and product features,
// the M-1 feature blocks are concatenated in ascending j (skipping i) and
// projected through tanh, and the result is gated against r_i's own
// encoding. The concatenation order is fixed, so scores are not invariant
// to reordering the candidate list.

#include <cstdint>
#include <span>
#include <vector>

#include "fcm/autodiff.hpp"
#include "fcm/config.hpp"
#include "fcm/params.hpp"
#include "fcm/trace.hpp"

namespace fcm::comparison {

using RowMask = std::span<const std::uint8_t>;

// Parameters absent for a variant are left default (tape == nullptr).
struct Weights {
  ad::Var w1;  // 3d x 1
  ad::Var w2;  // 2d(M-1) x d, or d(M-1) x d for coarse_grained
  ad::Var b2;  // 1 x d
  ad::Var w3;  // 2d x d
  ad::Var b3;  // 1 x d
};

void declare_params(ParamStore& store, const ModelConfig& cfg, Rng& rng);
std::size_t param_count(const ModelConfig& cfg);
Weights bind(const BoundParams& params, const ModelConfig& cfg);

// Row-stochastic m x n attention of h_i over the valid rows of h_j, with
// logits w1 . [h_i,m ; h_j,n ; h_i,m * h_j,n].
ad::Var paired_attention(ad::Var h_i, ad::Var h_j, RowMask mask_j, ad::Var w1, ForwardTrace* trace = nullptr);

// [h_i - A h_j ; h_i * A h_j], m x 2d.
ad::Var paired_correlation(ad::Var h_i, ad::Var attention, ad::Var h_j);

// Coarse alternative: A = softmax(h_i h_j^T) over valid keys, result A h_j.
ad::Var coarse_correlation(ad::Var h_i, ad::Var h_j, RowMask mask_j, ForwardTrace* trace = nullptr);

// tanh([parts...] w2 + b2). Throws DimensionError unless parts.size() == expected_parts.
ad::Var response_level_compare(std::span<const ad::Var> parts, std::size_t expected_parts, ad::Var w2, ad::Var b2);

// Combines the compared information e with the source encoding h. Rows
// outside row_mask are zeroed in the result.
ad::Var gate_fuse(ad::Var e, ad::Var h, RowMask row_mask, const Weights& w, ComparisonVariant variant,
                  ForwardTrace* trace = nullptr);

// Fused representation for every candidate.
std::vector<ad::Var> compare_all(std::span<const ad::Var> encodings, std::span<const RowMask> masks, const Weights& w,
                                 ComparisonVariant variant, ForwardTrace* trace = nullptr);

}  // namespace fcm::comparison
