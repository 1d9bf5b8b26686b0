#include "fcm/model.hpp"

#include <string>

#include "fcm/comparison.hpp"
#include "fcm/consistency.hpp"
#include "fcm/errors.hpp"

namespace fcm {
namespace {

void declare_all(ParamStore& store, const ModelConfig& cfg, std::size_t vocab_size, Rng& rng) {
  encoder::declare_params(store, cfg, vocab_size, rng);
  comparison::declare_params(store, cfg, rng);
  consistency::declare_params(store, cfg, "hist", rng);
  consistency::declare_params(store, cfg, "spk", rng);
  head::declare_params(store, cfg, rng);
  store.set_trainable("cmp.", cfg.use_comparison);
  store.set_trainable("hist.", cfg.use_history);
  store.set_trainable("spk.", cfg.use_speaker);
}

}  // namespace

ExampleView view_of(const corpus::Batch& batch, std::size_t row) {
  ExampleView v;
  v.context_ids = batch.context_ids_row(row);
  v.context_mask = batch.context_mask_row(row);
  auto speaker = corpus::speaker_history_rows(batch, row);
  v.speaker_rows = std::move(speaker.mask);
  v.speaker_fallback = speaker.fallback;
  for (std::size_t i = 0; i < batch.m; ++i) {
    v.candidate_ids.push_back(batch.candidate_ids_row(row, i));
    v.candidate_masks.push_back(batch.candidate_mask_row(row, i));
  }
  v.gold = batch.gold[row];
  return v;
}

FcmModel::FcmModel(ModelConfig cfg, std::size_t vocab_size, Rng& rng) : cfg_(cfg), vocab_size_(vocab_size) {
  declare_all(params_, cfg_, vocab_size_, rng);
}

FcmModel::FcmModel(ModelConfig cfg, std::size_t vocab_size, ParamStore params)
    : cfg_(cfg), vocab_size_(vocab_size), params_(std::move(params)) {
  Rng scratch(0);
  ParamStore reference;
  declare_all(reference, cfg_, vocab_size_, scratch);
  if (reference.size() != params_.size()) {
    throw ConfigError("parameter set has " + std::to_string(params_.size()) + " tensors, model expects " +
                      std::to_string(reference.size()));
  }
  for (std::size_t i = 0; i < reference.size(); ++i) {
    params_[i].trainable = reference[i].trainable;
    if (reference[i].name != params_[i].name || reference[i].value.shape() != params_[i].value.shape()) {
      throw ConfigError("parameter " + std::to_string(i) + " is " + params_[i].name +
                        to_string(params_[i].value.shape()) + ", model expects " + reference[i].name +
                        to_string(reference[i].value.shape()));
    }
  }
}

std::size_t FcmModel::expected_param_count(const ModelConfig& cfg, std::size_t vocab_size) {
  return encoder::param_count(cfg, vocab_size) + comparison::param_count(cfg) + 2 * consistency::param_count(cfg) +
         head::param_count(cfg);
}

ad::Var FcmModel::score_encodings(const BoundParams& params, std::span<const encoder::EncodedPair> encodings,
                                  RowMask context_mask, RowMask speaker_mask,
                                  std::span<const RowMask> candidate_masks, ForwardTrace* trace) const {
  const std::size_t m = encodings.size();
  if (m != cfg_.m || candidate_masks.size() != m) {
    throw DimensionError("score_encodings: expected " + std::to_string(cfg_.m) + " candidates, got " +
                         std::to_string(m));
  }
  ad::Tape& tape = *encodings[0].summary.tape;

  std::vector<ad::Var> candidates;
  candidates.reserve(m);
  for (const auto& e : encodings) candidates.push_back(e.candidate);
  if (cfg_.use_comparison) {
    candidates = comparison::compare_all(candidates, candidate_masks, comparison::bind(params, cfg_), cfg_.variant,
                                         trace);
  }

  const ad::Var absent = tape.constant(Tensor(Shape{1, cfg_.d}));
  std::vector<ad::Var> reasoning;
  reasoning.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const ad::Var hist = cfg_.use_history
                             ? consistency::history_consistency(encodings[i].context, context_mask, candidates[i],
                                                                candidate_masks[i],
                                                                consistency::bind(params, "hist"), trace)
                             : absent;
    const ad::Var spk = cfg_.use_speaker
                            ? consistency::speaker_consistency(encodings[i].context, speaker_mask, candidates[i],
                                                               candidate_masks[i], consistency::bind(params, "spk"),
                                                               trace)
                            : absent;
    reasoning.push_back(head::reasoning_concat(encodings[i].summary, hist, spk));
  }
  const ad::Var probs = head::candidate_scores(reasoning, params["head.w16"], params["head.b6"]);
  if (trace) trace->probabilities.push_back(probs.value());
  return probs;
}

ad::Var FcmModel::forward(const BoundParams& params, const ExampleView& ex, Rng* dropout, ForwardTrace* trace) const {
  const auto encodings = encoder::encode_all_candidates(params, cfg_, ex.context_ids, ex.context_mask,
                                                        ex.candidate_ids, ex.candidate_masks, dropout, trace);
  return score_encodings(params, encodings, ex.context_mask, ex.speaker_rows, ex.candidate_masks, trace);
}

head::Loss FcmModel::batch_loss(const BoundParams& params, const corpus::Batch& batch,
                                std::span<const std::size_t> rows, double lambda, Rng* dropout,
                                std::vector<ad::Var>* probabilities) const {
  std::vector<ad::Var> probs;
  std::vector<std::int32_t> gold;
  for (std::size_t row : rows) {
    probs.push_back(forward(params, view_of(batch, row), dropout));
    gold.push_back(batch.gold[row]);
  }
  std::vector<ad::Var> theta;
  theta.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.store()[i].trainable) theta.push_back(params.at(i));
  }
  auto out = head::loss(probs, gold, theta, lambda);
  if (probabilities) *probabilities = std::move(probs);
  return out;
}

std::vector<std::vector<double>> FcmModel::predict(const corpus::Batch& batch) const {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size);
  for (std::size_t row = 0; row < batch.size; ++row) {
    ad::Tape tape;
    BoundParams bound(tape, params_);
    const ad::Var p = forward(bound, view_of(batch, row), nullptr);
    out.emplace_back(p.value().values().begin(), p.value().values().end());
  }
  return out;
}

}  // namespace fcm
