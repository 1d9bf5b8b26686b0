#pragma once

// Dialogue datasets: JSONL loading, vocabulary, padded batches.
//
// Dataset line:
//   {"context": [[speaker, utterance], ...], "responder": speaker,
//    "options": [utterance x M], "answer": int}
// "answer" is optional (inference files). A single capital letter is also
// accepted and maps A->0, B->1, ...

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fcm::corpus {

struct Utterance {
  std::string speaker;
  std::vector<std::string> tokens;
};

struct DialogueExample {
  std::vector<Utterance> context;
  std::vector<std::vector<std::string>> candidates;
  std::optional<std::size_t> gold_index;
  std::string responder;
};

// Lowercase, pad ASCII punctuation with spaces, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

// Parses one dataset line. expected_m, when set, fixes the option count.
DialogueExample parse_example(std::string_view line, std::size_t line_number, std::optional<std::size_t> expected_m);
// Blank lines are skipped. Without expected_m the first example fixes M.
std::vector<DialogueExample> read_jsonl(std::istream& in, std::optional<std::size_t> expected_m = std::nullopt);
std::vector<DialogueExample> load_jsonl(const std::filesystem::path& path,
                                        std::optional<std::size_t> expected_m = std::nullopt);

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kSep = 2;
  static constexpr std::int32_t kSum = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();
  // Tokens for ids kReserved.. in order.
  explicit Vocabulary(std::span<const std::string> tokens);

  std::int32_t id(std::string_view token) const;
  const std::string& token(std::int32_t id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  // All non-reserved tokens in id order.
  std::span<const std::string> learned_tokens() const;

  std::vector<std::int32_t> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const std::int32_t> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

// Tokens with count >= min_count, by descending count then lexicographically.
Vocabulary build_vocab(std::span<const DialogueExample> examples, std::size_t min_count);

struct Limits {
  std::size_t context = 0;
  std::size_t response = 0;
};

// Row-major padded arrays. context_* are [size x l_ctx], candidate_* are
// [size x m x l_resp]. gold is -1 for unlabeled examples.
struct Batch {
  std::size_t size = 0;
  std::size_t m = 0;
  std::size_t l_ctx = 0;
  std::size_t l_resp = 0;
  std::vector<std::int32_t> context_ids;
  std::vector<std::uint8_t> context_mask;
  std::vector<std::uint8_t> speaker_mask;
  std::vector<std::int32_t> candidate_ids;
  std::vector<std::uint8_t> candidate_mask;
  std::vector<std::int32_t> gold;

  std::span<const std::int32_t> context_ids_row(std::size_t b) const;
  std::span<const std::uint8_t> context_mask_row(std::size_t b) const;
  std::span<const std::uint8_t> speaker_mask_row(std::size_t b) const;
  std::span<const std::int32_t> candidate_ids_row(std::size_t b, std::size_t i) const;
  std::span<const std::uint8_t> candidate_mask_row(std::size_t b, std::size_t i) const;
};

// Context utterances are joined with SEP and truncated from the front to
// limits.context; candidates are truncated from the back to limits.response.
Batch make_batch(std::span<const DialogueExample> examples, const Vocabulary& vocab, Limits limits);

struct SpeakerRows {
  std::vector<std::uint8_t> mask;
  bool fallback = false;
};

// The responder's own context positions; the whole valid context when the
// responder has none in the (possibly truncated) context.
SpeakerRows speaker_history_rows(const Batch& batch, std::size_t example_index);

}  // namespace fcm::corpus
