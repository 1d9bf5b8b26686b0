#include "fcm/encoder.hpp"

#include <cmath>
#include <string>

#include "fcm/corpus.hpp"
#include "fcm/errors.hpp"

namespace fcm::encoder {
namespace {

constexpr double kLayerNormEps = 1e-6;

std::string layer_key(std::size_t l, const char* name) { return "enc.l" + std::to_string(l) + "." + name; }

ad::Var dense(ad::Var x, ad::Var w, ad::Var b) { return ad::add_row_broadcast(ad::matmul(x, w), b); }

ad::Var norm(ad::Var x, ad::Var gain, ad::Var bias) {
  return ad::add_row_broadcast(ad::mul_row_broadcast(ad::layer_norm_rows(x, kLayerNormEps), gain), bias);
}

ad::Var self_attention(const BoundParams& p, const ModelConfig& cfg, std::size_t l, ad::Var x, const Mask& keys,
                       ForwardTrace* trace) {
  const ad::Var q = dense(x, p[layer_key(l, "wq")], p[layer_key(l, "bq")]);
  const ad::Var k = dense(x, p[layer_key(l, "wk")], p[layer_key(l, "bk")]);
  const ad::Var v = dense(x, p[layer_key(l, "wv")], p[layer_key(l, "bv")]);
  const std::size_t dh = cfg.d / cfg.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
    const ad::Var kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
    const ad::Var vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
    const ad::Var scores = ad::affine(ad::matmul(qh, ad::transpose(kh)), scale, 0.0);
    const ad::Var attn = ad::masked_softmax_rows(scores, keys);
    if (trace) {
      trace->attention.push_back({"encoder.l" + std::to_string(l) + ".h" + std::to_string(h), attn.value(), keys});
    }
    heads.push_back(ad::matmul(attn, vh));
  }
  return dense(ad::concat_cols(heads), p[layer_key(l, "wo")], p[layer_key(l, "bo")]);
}

}  // namespace

void declare_params(ParamStore& store, const ModelConfig& cfg, std::size_t vocab_size, Rng& rng) {
  const std::size_t d = cfg.d, f = cfg.ffn();
  store.add("enc.tok_emb", normal(vocab_size, d, cfg.embedding_std, rng));
  store.add("enc.pos_emb", normal(cfg.max_positions(), d, cfg.embedding_std, rng));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    for (const char* w : {"wq", "wk", "wv"}) store.add(layer_key(l, w), xavier_uniform(d, d, rng));
    for (const char* b : {"bq", "bk", "bv"}) store.add(layer_key(l, b), Tensor(Shape{1, d}));
    store.add(layer_key(l, "wo"), xavier_uniform(d, d, rng));
    store.add(layer_key(l, "bo"), Tensor(Shape{1, d}));
    store.add(layer_key(l, "ln1.gain"), Tensor(Shape{1, d}, 1.0));
    store.add(layer_key(l, "ln1.bias"), Tensor(Shape{1, d}));
    store.add(layer_key(l, "ffn.w1"), xavier_uniform(d, f, rng));
    store.add(layer_key(l, "ffn.b1"), Tensor(Shape{1, f}));
    store.add(layer_key(l, "ffn.w2"), xavier_uniform(f, d, rng));
    store.add(layer_key(l, "ffn.b2"), Tensor(Shape{1, d}));
    store.add(layer_key(l, "ln2.gain"), Tensor(Shape{1, d}, 1.0));
    store.add(layer_key(l, "ln2.bias"), Tensor(Shape{1, d}));
  }
}

std::size_t param_count(const ModelConfig& cfg, std::size_t vocab_size) {
  const std::size_t d = cfg.d, f = cfg.ffn();
  const std::size_t per_layer = 4 * d * d + 4 * d + 2 * d + d * f + f + f * d + d + 2 * d;
  return vocab_size * d + cfg.max_positions() * d + cfg.n_layers * per_layer;
}

EncodedPair encode_pair(const BoundParams& params, const ModelConfig& cfg, std::span<const std::int32_t> context_ids,
                        std::span<const std::uint8_t> context_mask, std::span<const std::int32_t> candidate_ids,
                        std::span<const std::uint8_t> candidate_mask, Rng* dropout, ForwardTrace* trace) {
  if (context_ids.size() != context_mask.size() || candidate_ids.size() != candidate_mask.size()) {
    throw DimensionError("encode_pair: ids and masks differ in length");
  }
  const std::size_t lc = context_ids.size(), lr = candidate_ids.size();
  const std::size_t total = 1 + lc + lr;
  if (total > cfg.max_positions()) {
    throw DimensionError("encode_pair: length " + std::to_string(total) + " exceeds the " +
                         std::to_string(cfg.max_positions()) + " available positions");
  }

  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> keys;
  ids.reserve(total);
  keys.reserve(total);
  ids.push_back(corpus::Vocabulary::kSum);
  keys.push_back(1);
  ids.insert(ids.end(), context_ids.begin(), context_ids.end());
  keys.insert(keys.end(), context_mask.begin(), context_mask.end());
  ids.insert(ids.end(), candidate_ids.begin(), candidate_ids.end());
  keys.insert(keys.end(), candidate_mask.begin(), candidate_mask.end());

  ad::Var x = ad::add(ad::gather_rows(params["enc.tok_emb"], ids), ad::slice_rows(params["enc.pos_emb"], 0, total));
  const Mask key_mask = Mask::broadcast_keys(total, keys);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    x = norm(ad::add(x, self_attention(params, cfg, l, x, key_mask, trace)), params[layer_key(l, "ln1.gain")],
             params[layer_key(l, "ln1.bias")]);
    const ad::Var hidden =
        ad::relu(dense(x, params[layer_key(l, "ffn.w1")], params[layer_key(l, "ffn.b1")]));
    const ad::Var ffn = dense(hidden, params[layer_key(l, "ffn.w2")], params[layer_key(l, "ffn.b2")]);
    x = norm(ad::add(x, ffn), params[layer_key(l, "ln2.gain")], params[layer_key(l, "ln2.bias")]);
  }

  if (dropout && cfg.dropout > 0.0) {
    std::bernoulli_distribution keep(1.0 - cfg.dropout);
    Tensor mask(Shape{total, cfg.d});
    const double scale = 1.0 / (1.0 - cfg.dropout);
    for (double& v : mask.values()) v = keep(*dropout) ? scale : 0.0;
    x = ad::mul(x, x.tape->constant(std::move(mask)));
  }

  return EncodedPair{ad::slice_rows(x, 1, 1 + lc), ad::slice_rows(x, 1 + lc, total), ad::slice_rows(x, 0, 1)};
}

std::vector<EncodedPair> encode_all_candidates(const BoundParams& params, const ModelConfig& cfg,
                                               std::span<const std::int32_t> context_ids,
                                               std::span<const std::uint8_t> context_mask,
                                               std::span<const std::span<const std::int32_t>> candidate_ids,
                                               std::span<const std::span<const std::uint8_t>> candidate_masks,
                                               Rng* dropout, ForwardTrace* trace) {
  if (candidate_ids.size() != candidate_masks.size()) {
    throw DimensionError("encode_all_candidates: ids and masks differ in count");
  }
  std::vector<EncodedPair> out;
  out.reserve(candidate_ids.size());
  for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
    out.push_back(encode_pair(params, cfg, context_ids, context_mask, candidate_ids[i], candidate_masks[i], dropout,
                              trace));
  }
  return out;
}

}  // namespace fcm::encoder
