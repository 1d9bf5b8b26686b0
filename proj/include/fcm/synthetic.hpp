#pragma once

// Generated dialogue corpora for tests, gradient checks and demos.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fcm/corpus.hpp"

namespace fcm::synthetic {

struct RandomCorpusOptions {
  std::size_t examples = 20;
  std::size_t m = 4;
  std::size_t vocab_words = 40;
  std::size_t utterances = 3;
  std::size_t utterance_len = 4;
  std::size_t response_len = 3;
  std::uint64_t seed = 1;
};

// Random tokens, alternating speakers A/B, responder B, uniformly random gold.
std::vector<corpus::DialogueExample> random_corpus(const RandomCorpusOptions& opts);

// Both speakers state where the same object comes from, with different
// answers, in random order among filler turns. The gold candidate repeats
// the responder's own statement, one distractor repeats the other
// speaker's, and two name places never mentioned. Only the speaker
// attribution separates the first two.
std::vector<corpus::DialogueExample> consistency_probe(std::size_t examples, std::uint64_t seed);

// Dataset JSONL, one example per line.
std::string to_jsonl(std::span<const corpus::DialogueExample> examples);

}  // namespace fcm::synthetic
