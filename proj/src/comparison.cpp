#include "fcm/comparison.hpp"

#include <string>

#include "fcm/errors.hpp"

namespace fcm::comparison {
namespace {

ad::Var row_mask_column(ad::Tape& tape, RowMask mask) {
  Tensor col(Shape{mask.size(), 1});
  for (std::size_t i = 0; i < mask.size(); ++i) col[i] = mask[i] ? 1.0 : 0.0;
  return tape.constant(std::move(col));
}

ad::Var zero_padding_rows(ad::Var x, RowMask mask) {
  if (mask.size() != x.rows()) {
    throw DimensionError("row mask of " + std::to_string(mask.size()) + " for " + std::to_string(x.rows()) + " rows");
  }
  return ad::mul_col_broadcast(x, row_mask_column(*x.tape, mask));
}

bool uses_gate(ComparisonVariant v) { return v != ComparisonVariant::kSimpleAdd && v != ComparisonVariant::kNoGate; }

std::size_t correlation_width(const ModelConfig& cfg) {
  return cfg.variant == ComparisonVariant::kCoarseGrained ? cfg.d : 2 * cfg.d;
}

}  // namespace

void declare_params(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d;
  if (cfg.variant != ComparisonVariant::kCoarseGrained) store.add("cmp.w1", xavier_uniform(3 * d, 1, rng));
  store.add("cmp.w2", xavier_uniform(correlation_width(cfg) * (cfg.m - 1), d, rng));
  store.add("cmp.b2", Tensor(Shape{1, d}));
  if (uses_gate(cfg.variant)) {
    Tensor w3 = xavier_uniform(2 * d, d, rng);
    if (cfg.variant == ComparisonVariant::kNoSource) {
      // Rows that would read H are structurally zero and never used.
      for (std::size_t i = d * d; i < w3.size(); ++i) w3[i] = 0.0;
    }
    store.add("cmp.w3", std::move(w3));
    store.add("cmp.b3", Tensor(Shape{1, d}));
  }
}

std::size_t param_count(const ModelConfig& cfg) {
  const std::size_t d = cfg.d;
  std::size_t n = correlation_width(cfg) * (cfg.m - 1) * d + d;
  if (cfg.variant != ComparisonVariant::kCoarseGrained) n += 3 * d;
  if (uses_gate(cfg.variant)) n += 2 * d * d + d;
  return n;
}

Weights bind(const BoundParams& params, const ModelConfig& cfg) {
  Weights w;
  if (cfg.variant != ComparisonVariant::kCoarseGrained) w.w1 = params["cmp.w1"];
  w.w2 = params["cmp.w2"];
  w.b2 = params["cmp.b2"];
  if (uses_gate(cfg.variant)) {
    w.w3 = params["cmp.w3"];
    w.b3 = params["cmp.b3"];
  }
  return w;
}

ad::Var paired_attention(ad::Var h_i, ad::Var h_j, RowMask mask_j, ad::Var w1, ForwardTrace* trace) {
  const std::size_t d = h_i.cols();
  if (h_j.cols() != d || w1.rows() != 3 * d || w1.cols() != 1 || mask_j.size() != h_j.rows()) {
    throw DimensionError("paired_attention: shapes " + to_string(h_i.value().shape()) + ", " +
                         to_string(h_j.value().shape()) + ", w1 " + to_string(w1.value().shape()));
  }
  const ad::Var w_self = ad::slice_rows(w1, 0, d);
  const ad::Var w_other = ad::slice_rows(w1, d, 2 * d);
  const ad::Var w_prod = ad::transpose(ad::slice_rows(w1, 2 * d, 3 * d));
  // a_mn = h_i,m . w_self + h_j,n . w_other + (h_i,m * w_prod) . h_j,n
  ad::Var logits = ad::matmul(ad::mul_row_broadcast(h_i, w_prod), ad::transpose(h_j));
  logits = ad::add_row_broadcast(logits, ad::transpose(ad::matmul(h_j, w_other)));
  logits = ad::add_col_broadcast(logits, ad::matmul(h_i, w_self));
  const Mask keys = Mask::broadcast_keys(h_i.rows(), mask_j);
  const ad::Var attn = ad::masked_softmax_rows(logits, keys);
  if (trace) trace->attention.push_back({"comparison.paired", attn.value(), keys});
  return attn;
}

ad::Var paired_correlation(ad::Var h_i, ad::Var attention, ad::Var h_j) {
  const ad::Var attended = ad::matmul(attention, h_j);
  return ad::concat_cols({ad::sub(h_i, attended), ad::mul(h_i, attended)});
}

ad::Var coarse_correlation(ad::Var h_i, ad::Var h_j, RowMask mask_j, ForwardTrace* trace) {
  const Mask keys = Mask::broadcast_keys(h_i.rows(), mask_j);
  const ad::Var attn = ad::masked_softmax_rows(ad::matmul(h_i, ad::transpose(h_j)), keys);
  if (trace) trace->attention.push_back({"comparison.coarse", attn.value(), keys});
  return ad::matmul(attn, h_j);
}

ad::Var response_level_compare(std::span<const ad::Var> parts, std::size_t expected_parts, ad::Var w2, ad::Var b2) {
  if (parts.size() != expected_parts) {
    throw DimensionError("response_level_compare: expected " + std::to_string(expected_parts) + " parts, got " +
                         std::to_string(parts.size()));
  }
  return ad::tanh(ad::add_row_broadcast(ad::matmul(ad::concat_cols(parts), w2), b2));
}

ad::Var gate_fuse(ad::Var e, ad::Var h, RowMask row_mask, const Weights& w, ComparisonVariant variant,
                  ForwardTrace* trace) {
  if (!e.value().same_shape(h.value())) {
    throw DimensionError("gate_fuse: " + to_string(e.value().shape()) + " vs " + to_string(h.value().shape()));
  }
  switch (variant) {
    case ComparisonVariant::kNoGate:
      return e;
    case ComparisonVariant::kSimpleAdd:
      return zero_padding_rows(ad::add(e, h), row_mask);
    case ComparisonVariant::kFull:
    case ComparisonVariant::kNoSource:
    case ComparisonVariant::kCoarseGrained:
      break;
  }
  const std::size_t d = e.cols();
  const ad::Var pre = variant == ComparisonVariant::kNoSource
                          ? ad::matmul(e, ad::slice_rows(w.w3, 0, d))
                          : ad::matmul(ad::concat_cols({e, h}), w.w3);
  const ad::Var g = ad::sigmoid(ad::add_row_broadcast(pre, w.b3));
  const ad::Var fused = ad::add(ad::mul(g, e), ad::mul(ad::affine(g, -1.0, 1.0), h));
  const ad::Var out = zero_padding_rows(fused, row_mask);
  if (trace) {
    trace->gates.push_back({"comparison.gate", g.value(), e.value(), h.value(), out.value(),
                            std::vector<std::uint8_t>(row_mask.begin(), row_mask.end())});
  }
  return out;
}

std::vector<ad::Var> compare_all(std::span<const ad::Var> encodings, std::span<const RowMask> masks, const Weights& w,
                                 ComparisonVariant variant, ForwardTrace* trace) {
  const std::size_t m = encodings.size();
  if (masks.size() != m) throw DimensionError("compare_all: encodings and masks differ in count");
  if (m < 2) throw DimensionError("compare_all: need at least 2 candidates");
  std::vector<ad::Var> fused;
  fused.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<ad::Var> parts;
    parts.reserve(m - 1);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      if (variant == ComparisonVariant::kCoarseGrained) {
        parts.push_back(coarse_correlation(encodings[i], encodings[j], masks[j], trace));
      } else {
        const ad::Var attn = paired_attention(encodings[i], encodings[j], masks[j], w.w1, trace);
        parts.push_back(paired_correlation(encodings[i], attn, encodings[j]));
      }
    }
    const ad::Var e = zero_padding_rows(response_level_compare(parts, m - 1, w.w2, w.b2), masks[i]);
    fused.push_back(gate_fuse(e, encodings[i], masks[i], w, variant, trace));
  }
  return fused;
}

}  // namespace fcm::comparison
