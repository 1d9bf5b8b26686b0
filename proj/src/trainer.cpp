#include "fcm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fcm/errors.hpp"

namespace fcm {
namespace {

void require_m(std::span<const corpus::DialogueExample> examples, std::size_t m, const char* what) {
  for (const auto& ex : examples) {
    if (ex.candidates.size() != m) {
      throw ConfigError(std::string(what) + " has " + std::to_string(ex.candidates.size()) +
                        " candidates per example, config says M = " + std::to_string(m));
    }
  }
}

corpus::Vocabulary checked_vocab(const TrainConfig& cfg, std::span<const corpus::DialogueExample> train,
                                 std::span<const corpus::DialogueExample> dev) {
  validate(cfg);
  require_m(train, cfg.model.m, "training data");
  require_m(dev, cfg.model.m, "dev data");
  return corpus::build_vocab(train, cfg.min_count);
}

corpus::Limits limits_of(const ModelConfig& m) { return {m.l_ctx, m.l_resp}; }

Rng seeded(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

std::string rng_text(const Rng& rng) {
  std::ostringstream o;
  o << rng;
  return o.str();
}

}  // namespace

void adam_step(ParamStore& params, std::span<const Tensor> grads, AdamState& state, const AdamOptions& opts) {
  if (grads.size() != params.size()) throw DimensionError("adam_step: one gradient per parameter required");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].trainable) continue;
    if (!grads[p].same_shape(params[p].value)) {
      throw DimensionError("adam_step: gradient shape mismatch for " + params[p].name);
    }
    if (!grads[p].all_finite()) throw NumericError("non-finite gradient for parameter " + params[p].name);
  }
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.value.shape(), 0.0);
      state.second.emplace_back(p.value.shape(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opts.beta1, t);
  const double c2 = 1.0 - std::pow(opts.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].trainable) continue;
    Tensor& w = params[p].value;
    Tensor& m = state.first[p];
    Tensor& v = state.second[p];
    const Tensor& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
      w[i] -= opts.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts.epsilon);
    }
  }
}

nlohmann::json to_json(const EpochLog& log) {
  return nlohmann::json{{"epoch", log.epoch}, {"train_loss", log.train_loss}, {"dev", head::to_json(log.dev)}};
}

Trainer::Trainer(TrainConfig cfg, std::vector<corpus::DialogueExample> train, std::vector<corpus::DialogueExample> dev)
    : cfg_(std::move(cfg)),
      vocab_(checked_vocab(cfg_, train, dev)),
      train_(corpus::make_batch(train, vocab_, limits_of(cfg_.model))),
      dev_(corpus::make_batch(dev, vocab_, limits_of(cfg_.model))),
      rng_(seeded(cfg_.seed)),
      model_(cfg_.model, vocab_.size(), rng_) {
  for (std::size_t b = 0; b < train_.size; ++b) {
    if (train_.gold[b] < 0) throw DataError("training example " + std::to_string(b) + " has no answer");
  }
  for (std::size_t b = 0; b < dev_.size; ++b) {
    if (dev_.gold[b] < 0) throw DataError("dev example " + std::to_string(b) + " has no answer");
  }
}

double Trainer::run_epoch() {
  std::vector<std::size_t> order(train_.size);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);

  const AdamOptions opts{cfg_.learning_rate};
  double weighted = 0.0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    const std::span<const std::size_t> rows(order.data() + start, end - start);
    ad::Tape tape;
    BoundParams bound(tape, model_.params());
    const head::Loss loss = model_.batch_loss(bound, train_, rows, cfg_.lambda, &rng_);
    const double value = loss.total.value()[0];
    if (!std::isfinite(value)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch_));
    const auto grads = bound.gradients(tape.backward(loss.total));
    adam_step(model_.params(), grads, adam_, opts);
    if (step_hook_) step_hook_(grads);
    weighted += value * static_cast<double>(rows.size());
  }
  ++epoch_;
  return weighted / static_cast<double>(order.size());
}

head::RankingReport Trainer::evaluate_train() const {
  return head::rank_and_report(model_.predict(train_), train_.gold);
}

head::RankingReport Trainer::evaluate_dev() const { return head::rank_and_report(model_.predict(dev_), dev_.gold); }

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = cfg_;
  c.vocab = vocab_;
  c.params = model_.params();
  c.optimizer = adam_;
  c.epoch = epoch_;
  c.rng_state = rng_text(rng_);
  return c;
}

TrainResult train(const TrainConfig& cfg, const std::filesystem::path& train_path,
                  const std::filesystem::path& dev_path, const std::function<void(const EpochLog&)>& on_epoch) {
  validate(cfg);
  auto train_set = corpus::load_jsonl(train_path);
  auto dev_set = corpus::load_jsonl(dev_path);
  Trainer trainer(cfg, std::move(train_set), std::move(dev_set));

  TrainResult result;
  double best_r1 = -1.0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    EpochLog log;
    log.epoch = e;
    log.train_loss = trainer.run_epoch();
    log.dev = trainer.evaluate_dev();
    if (log.dev.r_at_1 > best_r1) {
      best_r1 = log.dev.r_at_1;
      result.best = trainer.checkpoint();
    }
    if (on_epoch) on_epoch(log);
    result.log.push_back(std::move(log));
  }
  result.last = trainer.checkpoint();
  return result;
}

FcmModel model_from(const Checkpoint& ckpt) {
  return FcmModel(ckpt.config.model, ckpt.vocab.size(), ckpt.params);
}

std::vector<std::vector<double>> score(const Checkpoint& ckpt, std::span<const corpus::DialogueExample> examples) {
  require_m(examples, ckpt.config.model.m, "dataset");
  const FcmModel model = model_from(ckpt);
  return model.predict(corpus::make_batch(examples, ckpt.vocab, limits_of(ckpt.config.model)));
}

head::RankingReport evaluate(const Checkpoint& ckpt, std::span<const corpus::DialogueExample> examples) {
  std::vector<std::int32_t> gold;
  for (std::size_t b = 0; b < examples.size(); ++b) {
    if (!examples[b].gold_index) throw DataError("example " + std::to_string(b) + " has no answer to evaluate against");
    gold.push_back(static_cast<std::int32_t>(*examples[b].gold_index));
  }
  return head::rank_and_report(score(ckpt, examples), gold);
}

head::RankingReport evaluate(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto examples = corpus::load_jsonl(path);
  return evaluate(ckpt, examples);
}

}  // namespace fcm
