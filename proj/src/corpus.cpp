#include "fcm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "fcm/errors.hpp"
#include "json.hpp"

namespace fcm::corpus {
namespace {

using nlohmann::json;

std::size_t parse_answer(const json& answer, std::size_t m, std::size_t line) {
  if (answer.is_number_integer()) {
    const auto v = answer.get<long long>();
    if (v < 0 || static_cast<std::size_t>(v) >= m) {
      throw DataError("answer " + std::to_string(v) + " outside [0, " + std::to_string(m) + ")", line);
    }
    return static_cast<std::size_t>(v);
  }
  if (answer.is_string()) {
    const auto s = answer.get<std::string>();
    if (s.size() == 1 && s[0] >= 'A' && static_cast<std::size_t>(s[0] - 'A') < m) {
      return static_cast<std::size_t>(s[0] - 'A');
    }
  }
  throw DataError("unknown answer label " + answer.dump(), line);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::string padded;
  padded.reserve(text.size() * 2);
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) {
      padded += ' ';
      padded += ch;
      padded += ' ';
    } else if (c < 0x80) {
      padded += static_cast<char>(std::tolower(c));
    } else {
      padded += ch;
    }
  }
  std::vector<std::string> out;
  std::istringstream ss(padded);
  for (std::string tok; ss >> tok;) out.push_back(std::move(tok));
  return out;
}

DialogueExample parse_example(std::string_view line, std::size_t line_number, std::optional<std::size_t> expected_m) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what(), line_number);
  }
  if (!j.is_object()) throw DataError("expected a JSON object", line_number);
  for (const char* key : {"context", "responder", "options"}) {
    if (!j.contains(key)) throw DataError(std::string("missing field \"") + key + "\"", line_number);
  }

  DialogueExample ex;
  if (!j["responder"].is_string()) throw DataError("\"responder\" must be a string", line_number);
  ex.responder = j["responder"].get<std::string>();

  const json& ctx = j["context"];
  if (!ctx.is_array() || ctx.empty()) throw DataError("\"context\" must be a non-empty array", line_number);
  std::size_t context_tokens = 0;
  for (const json& turn : ctx) {
    if (!turn.is_array() || turn.size() != 2 || !turn[0].is_string() || !turn[1].is_string()) {
      throw DataError("context turns must be [speaker, utterance] string pairs", line_number);
    }
    Utterance u{turn[0].get<std::string>(), tokenize(turn[1].get<std::string>())};
    context_tokens += u.tokens.size();
    ex.context.push_back(std::move(u));
  }
  if (context_tokens == 0) throw DataError("context has no tokens", line_number);

  const json& opts = j["options"];
  if (!opts.is_array()) throw DataError("\"options\" must be an array", line_number);
  if (expected_m && opts.size() != *expected_m) {
    throw DataError("expected " + std::to_string(*expected_m) + " options, found " + std::to_string(opts.size()),
                    line_number);
  }
  if (opts.size() < 2) throw DataError("need at least 2 options", line_number);
  for (const json& o : opts) {
    if (!o.is_string()) throw DataError("options must be strings", line_number);
    auto toks = tokenize(o.get<std::string>());
    if (toks.empty()) throw DataError("empty option", line_number);
    ex.candidates.push_back(std::move(toks));
  }

  if (j.contains("answer") && !j["answer"].is_null()) {
    ex.gold_index = parse_answer(j["answer"], ex.candidates.size(), line_number);
  }
  return ex;
}

std::vector<DialogueExample> read_jsonl(std::istream& in, std::optional<std::size_t> expected_m) {
  std::vector<DialogueExample> out;
  std::string line;
  for (std::size_t line_number = 1; std::getline(in, line); ++line_number) {
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    out.push_back(parse_example(line, line_number, expected_m));
    if (!expected_m) expected_m = out.back().candidates.size();
  }
  return out;
}

std::vector<DialogueExample> load_jsonl(const std::filesystem::path& path, std::optional<std::size_t> expected_m) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  auto out = read_jsonl(in, expected_m);
  if (out.empty()) throw DataError("dataset " + path.string() + " has no examples");
  return out;
}

Vocabulary::Vocabulary() : tokens_{"<pad>", "<unk>", "<sep>", "<sum>"} {
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<std::int32_t>(i));
}

Vocabulary::Vocabulary(std::span<const std::string> tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (ids_.contains(t)) throw DataError("duplicate vocabulary token '" + t + "'");
    ids_.emplace(t, static_cast<std::int32_t>(tokens_.size()));
    tokens_.push_back(t);
  }
}

std::int32_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end() || it->second < static_cast<std::int32_t>(kReserved)) return kUnk;
  return it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }

std::span<const std::string> Vocabulary::learned_tokens() const {
  return std::span<const std::string>(tokens_).subspan(kReserved);
}

std::vector<std::int32_t> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<std::int32_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const std::int32_t> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

Vocabulary build_vocab(std::span<const DialogueExample> examples, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : examples) {
    for (const auto& u : ex.context)
      for (const auto& t : u.tokens) ++counts[t];
    for (const auto& c : ex.candidates)
      for (const auto& t : c) ++counts[t];
  }
  if (counts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocabulary(tokens);
}

std::span<const std::int32_t> Batch::context_ids_row(std::size_t b) const {
  return std::span<const std::int32_t>(context_ids).subspan(b * l_ctx, l_ctx);
}
std::span<const std::uint8_t> Batch::context_mask_row(std::size_t b) const {
  return std::span<const std::uint8_t>(context_mask).subspan(b * l_ctx, l_ctx);
}
std::span<const std::uint8_t> Batch::speaker_mask_row(std::size_t b) const {
  return std::span<const std::uint8_t>(speaker_mask).subspan(b * l_ctx, l_ctx);
}
std::span<const std::int32_t> Batch::candidate_ids_row(std::size_t b, std::size_t i) const {
  return std::span<const std::int32_t>(candidate_ids).subspan((b * m + i) * l_resp, l_resp);
}
std::span<const std::uint8_t> Batch::candidate_mask_row(std::size_t b, std::size_t i) const {
  return std::span<const std::uint8_t>(candidate_mask).subspan((b * m + i) * l_resp, l_resp);
}

Batch make_batch(std::span<const DialogueExample> examples, const Vocabulary& vocab, Limits limits) {
  if (limits.context < 1 || limits.response < 1) throw ConfigError("sequence limits must be >= 1");
  if (examples.empty()) throw DataError("cannot batch zero examples");
  Batch batch;
  batch.size = examples.size();
  batch.m = examples[0].candidates.size();
  batch.l_ctx = limits.context;
  batch.l_resp = limits.response;
  batch.context_ids.assign(batch.size * batch.l_ctx, Vocabulary::kPad);
  batch.context_mask.assign(batch.size * batch.l_ctx, 0);
  batch.speaker_mask.assign(batch.size * batch.l_ctx, 0);
  batch.candidate_ids.assign(batch.size * batch.m * batch.l_resp, Vocabulary::kPad);
  batch.candidate_mask.assign(batch.size * batch.m * batch.l_resp, 0);
  batch.gold.assign(batch.size, -1);

  for (std::size_t b = 0; b < examples.size(); ++b) {
    const auto& ex = examples[b];
    if (ex.candidates.size() != batch.m) {
      throw DataError("example " + std::to_string(b) + " has " + std::to_string(ex.candidates.size()) +
                      " candidates, batch expects " + std::to_string(batch.m));
    }
    // Joined context with a parallel speaker flag per position.
    std::vector<std::int32_t> ids;
    std::vector<std::uint8_t> own;
    for (std::size_t u = 0; u < ex.context.size(); ++u) {
      if (u > 0) {
        ids.push_back(Vocabulary::kSep);
        own.push_back(0);
      }
      const bool mine = ex.context[u].speaker == ex.responder;
      for (const auto& t : ex.context[u].tokens) {
        ids.push_back(vocab.id(t));
        own.push_back(mine ? 1 : 0);
      }
    }
    std::size_t start = ids.size() > limits.context ? ids.size() - limits.context : 0;
    if (start < ids.size() && ids[start] == Vocabulary::kSep) ++start;
    if (start == ids.size()) throw DataError("example " + std::to_string(b) + " has an empty context");
    for (std::size_t p = start; p < ids.size(); ++p) {
      const std::size_t at = b * batch.l_ctx + (p - start);
      batch.context_ids[at] = ids[p];
      batch.context_mask[at] = 1;
      batch.speaker_mask[at] = own[p];
    }

    for (std::size_t i = 0; i < batch.m; ++i) {
      const auto& cand = ex.candidates[i];
      if (cand.empty()) {
        throw DataError("example " + std::to_string(b) + " candidate " + std::to_string(i) + " is empty");
      }
      const std::size_t len = std::min(cand.size(), limits.response);
      for (std::size_t p = 0; p < len; ++p) {
        const std::size_t at = (b * batch.m + i) * batch.l_resp + p;
        batch.candidate_ids[at] = vocab.id(cand[p]);
        batch.candidate_mask[at] = 1;
      }
    }
    if (ex.gold_index) batch.gold[b] = static_cast<std::int32_t>(*ex.gold_index);
  }
  return batch;
}

SpeakerRows speaker_history_rows(const Batch& batch, std::size_t example_index) {
  if (example_index >= batch.size) throw std::out_of_range("speaker_history_rows: example index out of range");
  const auto speaker = batch.speaker_mask_row(example_index);
  SpeakerRows rows;
  if (std::any_of(speaker.begin(), speaker.end(), [](std::uint8_t v) { return v != 0; })) {
    rows.mask.assign(speaker.begin(), speaker.end());
    return rows;
  }
  const auto ctx = batch.context_mask_row(example_index);
  rows.mask.assign(ctx.begin(), ctx.end());
  rows.fallback = true;
  return rows;
}

}  // namespace fcm::corpus
