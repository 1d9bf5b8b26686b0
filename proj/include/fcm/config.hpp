#pragma once

// Run configuration. On disk it is flat `key = value` text, one pair per
// line, `#` starts a comment. Unknown keys are rejected.
//
//   d, n_layers, n_heads, ffn_dim, M, L_ctx, L_resp      model shape
//   dropout, embedding_std                               model init/regularization
//   comparison_variant = full|coarse_grained|simple_add|no_source|no_gate
//   use_comparison, use_history, use_speaker             ablation switches
//   learning_rate, lambda, batch_size, epochs, seed, min_count

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace fcm {

enum class ComparisonVariant { kFull, kCoarseGrained, kSimpleAdd, kNoSource, kNoGate };

std::string_view to_string(ComparisonVariant v);
// Throws ConfigError on an unknown name.
ComparisonVariant parse_variant(std::string_view name);

struct ModelConfig {
  std::size_t d = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 0;  // 0 means 4 * d
  std::size_t m = 4;
  std::size_t l_ctx = 64;
  std::size_t l_resp = 16;
  double dropout = 0.2;
  double embedding_std = 0.02;
  ComparisonVariant variant = ComparisonVariant::kFull;
  bool use_comparison = true;
  bool use_history = true;
  bool use_speaker = true;

  std::size_t ffn() const noexcept { return ffn_dim == 0 ? 4 * d : ffn_dim; }
  // SUM slot + context + candidate.
  std::size_t max_positions() const noexcept { return 1 + l_ctx + l_resp; }
};

struct TrainConfig {
  ModelConfig model;
  // The reference setting for fine-tuning a pretrained encoder is 1e-6; a
  // small encoder trained from scratch needs a larger step.
  double learning_rate = 1e-3;
  double lambda = 0.01;
  std::size_t batch_size = 4;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t min_count = 1;
};

// Throws ConfigError naming the offending key.
void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view value);
void validate(const TrainConfig& cfg);
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);
// Canonical text form; parse_config(to_text(c)) reproduces c exactly.
std::string to_text(const TrainConfig& cfg);

}  // namespace fcm
