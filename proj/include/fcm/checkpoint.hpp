#pragma once

// Checkpoint file layout (all integers little-endian):
//   8 bytes   magic "FCMCKPT1"
//   8 bytes   header length H
//   H bytes   JSON header: config text, vocabulary, tensor directory,
//             optimizer step, epoch, RNG state
//   rest      f64 values: every parameter in store order, then the Adam
//             first moments, then the second moments

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fcm/config.hpp"
#include "fcm/corpus.hpp"
#include "fcm/params.hpp"

namespace fcm {

struct AdamState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t step = 0;
};

struct Checkpoint {
  TrainConfig config;
  corpus::Vocabulary vocab;
  ParamStore params;
  AdamState optimizer;
  std::uint64_t epoch = 0;
  std::string rng_state;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws DataError for unreadable or corrupt files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fcm
