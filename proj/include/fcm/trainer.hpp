#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "fcm/checkpoint.hpp"
#include "fcm/config.hpp"
#include "fcm/corpus.hpp"
#include "fcm/head.hpp"
#include "fcm/model.hpp"

namespace fcm {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update of every trainable parameter; no weight
// decay here, the L2 term lives in the loss. Moments are allocated on first
// use. Throws NumericError naming the parameter on a non-finite gradient.
void adam_step(ParamStore& params, std::span<const Tensor> grads, AdamState& state, const AdamOptions& opts);

struct EpochLog {
  std::size_t epoch = 0;
  // Size-weighted mean of the minibatch objectives seen during the epoch.
  double train_loss = 0.0;
  head::RankingReport dev;
};

nlohmann::json to_json(const EpochLog& log);

class Trainer {
 public:
  // The vocabulary is built from `train`. Throws ConfigError when the data's
  // candidate count disagrees with cfg.model.m.
  Trainer(TrainConfig cfg, std::vector<corpus::DialogueExample> train, std::vector<corpus::DialogueExample> dev);

  // Called after each optimizer step with the step's parameter gradients.
  void on_step(std::function<void(const std::vector<Tensor>&)> hook) { step_hook_ = std::move(hook); }

  double run_epoch();
  head::RankingReport evaluate_train() const;
  head::RankingReport evaluate_dev() const;

  Checkpoint checkpoint() const;
  const FcmModel& model() const noexcept { return model_; }
  FcmModel& model() noexcept { return model_; }
  const corpus::Vocabulary& vocab() const noexcept { return vocab_; }
  std::size_t epochs_done() const noexcept { return epoch_; }

 private:
  TrainConfig cfg_;
  corpus::Vocabulary vocab_;
  corpus::Batch train_;
  corpus::Batch dev_;
  Rng rng_;
  FcmModel model_;
  AdamState adam_;
  std::size_t epoch_ = 0;
  std::function<void(const std::vector<Tensor>&)> step_hook_;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochLog> log;
};

TrainResult train(const TrainConfig& cfg, const std::filesystem::path& train_path,
                  const std::filesystem::path& dev_path, const std::function<void(const EpochLog&)>& on_epoch = {});

FcmModel model_from(const Checkpoint& ckpt);

// Probabilities for every example in `examples`, dropout off. Throws
// ConfigError when the data's candidate count differs from the checkpoint's.
std::vector<std::vector<double>> score(const Checkpoint& ckpt, std::span<const corpus::DialogueExample> examples);

// Requires gold answers on every example.
head::RankingReport evaluate(const Checkpoint& ckpt, const std::filesystem::path& path);
head::RankingReport evaluate(const Checkpoint& ckpt, std::span<const corpus::DialogueExample> examples);

}  // namespace fcm
