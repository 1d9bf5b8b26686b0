#include "fcm/consistency.hpp"

#include <algorithm>
#include <string>

#include "fcm/errors.hpp"

namespace fcm::consistency {
namespace {

std::string key(const char* prefix, const char* name) { return std::string(prefix) + "." + name; }

bool any(RowMask m) {
  return std::any_of(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; });
}

ad::Var attend(ad::Var queries, ad::Var keys, RowMask key_mask, ad::Var bilinear, const char* name,
               ForwardTrace* trace) {
  const Mask valid = Mask::broadcast_keys(queries.rows(), key_mask);
  const ad::Var attn = ad::masked_softmax_rows(ad::matmul(ad::matmul(queries, bilinear), ad::transpose(keys)), valid);
  if (trace) trace->attention.push_back({name, attn.value(), valid});
  return attn;
}

}  // namespace

void declare_params(ParamStore& store, const ModelConfig& cfg, const char* prefix, Rng& rng) {
  const std::size_t d = cfg.d;
  for (const char* w : {"w_ab", "w_ba", "proj_a", "proj_b", "gate_x", "gate_y"}) {
    store.add(key(prefix, w), xavier_uniform(d, d, rng));
  }
  store.add(key(prefix, "gate_b"), Tensor(Shape{1, d}));
}

std::size_t param_count(const ModelConfig& cfg) { return 6 * cfg.d * cfg.d + cfg.d; }

BlockWeights bind(const BoundParams& params, const char* prefix) {
  return BlockWeights{
      {params[key(prefix, "w_ab")], params[key(prefix, "w_ba")], params[key(prefix, "proj_a")],
       params[key(prefix, "proj_b")]},
      {params[key(prefix, "gate_x")], params[key(prefix, "gate_y")], params[key(prefix, "gate_b")]}};
}

std::pair<ad::Var, ad::Var> bidirectional_match(ad::Var h_a, RowMask mask_a, ad::Var h_b, RowMask mask_b,
                                                const MatchWeights& w, ForwardTrace* trace) {
  if (mask_a.size() != h_a.rows() || mask_b.size() != h_b.rows() || h_a.cols() != h_b.cols()) {
    throw DimensionError("bidirectional_match: shapes " + to_string(h_a.value().shape()) + " and " +
                         to_string(h_b.value().shape()) + " with masks of " + std::to_string(mask_a.size()) +
                         " and " + std::to_string(mask_b.size()));
  }
  if (!any(mask_a) || !any(mask_b)) throw InvalidMaskError("bidirectional_match: a side has no valid rows");
  const ad::Var attn_ab = attend(h_a, h_b, mask_b, w.a_to_b, "match.a_to_b", trace);
  const ad::Var attn_ba = attend(h_b, h_a, mask_a, w.b_to_a, "match.b_to_a", trace);
  const ad::Var a_side = ad::relu(ad::matmul(ad::matmul(attn_ab, h_b), w.proj_a));
  const ad::Var b_side = ad::relu(ad::matmul(ad::matmul(attn_ba, h_a), w.proj_b));
  return {a_side, b_side};
}

ad::Var pooled_gate_fuse(ad::Var h_x, RowMask mask_x, ad::Var h_y, RowMask mask_y, const GateWeights& w,
                         ForwardTrace* trace) {
  const ad::Var e_x = ad::masked_row_max_pool(h_x, mask_x);
  const ad::Var e_y = ad::masked_row_max_pool(h_y, mask_y);
  const ad::Var g =
      ad::sigmoid(ad::add_row_broadcast(ad::add(ad::matmul(e_x, w.w_x), ad::matmul(e_y, w.w_y)), w.bias));
  const ad::Var out = ad::add(ad::mul(g, e_x), ad::mul(ad::affine(g, -1.0, 1.0), e_y));
  if (trace) trace->gates.push_back({"consistency.gate", g.value(), e_x.value(), e_y.value(), out.value(), {1}});
  return out;
}

ad::Var history_consistency(ad::Var h_context, RowMask context_mask, ad::Var h_candidate, RowMask candidate_mask,
                            const BlockWeights& w, ForwardTrace* trace) {
  const auto [ctx_side, cand_side] = bidirectional_match(h_context, context_mask, h_candidate, candidate_mask, w.match, trace);
  return pooled_gate_fuse(ctx_side, context_mask, cand_side, candidate_mask, w.gate, trace);
}

ad::Var speaker_consistency(ad::Var h_context, RowMask speaker_mask, ad::Var h_candidate, RowMask candidate_mask,
                            const BlockWeights& w, ForwardTrace* trace) {
  return history_consistency(h_context, speaker_mask, h_candidate, candidate_mask, w, trace);
}

}  // namespace fcm::consistency
