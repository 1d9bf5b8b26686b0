#include "fcm/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "json.hpp"

namespace fcm::synthetic {
namespace {

using corpus::DialogueExample;
using corpus::Utterance;
using Gen = std::mt19937_64;

std::size_t pick(Gen& g, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(g); }

std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

}  // namespace

std::vector<DialogueExample> random_corpus(const RandomCorpusOptions& opts) {
  Gen g(opts.seed);
  auto word = [&] { return "w" + std::to_string(pick(g, opts.vocab_words)); };
  std::vector<DialogueExample> out;
  for (std::size_t e = 0; e < opts.examples; ++e) {
    DialogueExample ex;
    ex.responder = "B";
    for (std::size_t u = 0; u < opts.utterances; ++u) {
      Utterance utt{u % 2 == 0 ? "A" : "B", {}};
      for (std::size_t t = 0; t < opts.utterance_len; ++t) utt.tokens.push_back(word());
      ex.context.push_back(std::move(utt));
    }
    for (std::size_t i = 0; i < opts.m; ++i) {
      std::vector<std::string> cand;
      for (std::size_t t = 0; t < opts.response_len; ++t) cand.push_back(word());
      ex.candidates.push_back(std::move(cand));
    }
    ex.gold_index = pick(g, opts.m);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<DialogueExample> consistency_probe(std::size_t examples, std::uint64_t seed) {
  static const std::vector<std::string> kObjects = {"suit", "car", "watch", "bag", "lamp", "chair", "coat", "bike"};
  static const std::vector<std::string> kPlaces = {"italy", "france", "spain", "japan",  "china",
                                                   "brazil", "india", "egypt", "canada", "peru"};
  static const std::vector<std::vector<std::string>> kFillers = {
      {"how", "are", "you", "today"}, {"that", "sounds", "nice"}, {"i", "see"},
      {"really", "tell", "me", "more"}, {"it", "looks", "good"},  {"thanks", "a", "lot"}};

  Gen g(seed);
  std::vector<DialogueExample> out;
  for (std::size_t e = 0; e < examples; ++e) {
    DialogueExample ex;
    const bool responder_is_a = pick(g, 2) == 0;
    ex.responder = responder_is_a ? "A" : "B";
    const std::string other = responder_is_a ? "B" : "A";
    const std::string& object = kObjects[pick(g, kObjects.size())];

    std::vector<std::size_t> places(kPlaces.size());
    std::iota(places.begin(), places.end(), 0);
    std::shuffle(places.begin(), places.end(), g);
    const std::string& own = kPlaces[places[0]];
    const std::string& theirs = kPlaces[places[1]];

    std::vector<Utterance> turns;
    turns.push_back({ex.responder, {"my", object, "is", "from", own}});
    turns.push_back({other, {"my", object, "is", "from", theirs}});
    const std::size_t fillers = pick(g, 3);
    for (std::size_t f = 0; f < fillers; ++f) {
      turns.push_back({pick(g, 2) == 0 ? "A" : "B", kFillers[pick(g, kFillers.size())]});
    }
    std::shuffle(turns.begin(), turns.end(), g);
    ex.context = std::move(turns);

    std::vector<std::vector<std::string>> cands = {
        {"yes", "my", object, "is", "from", own},
        {"yes", "my", object, "is", "from", theirs},
        {"yes", "my", object, "is", "from", kPlaces[places[2]]},
        {"yes", "my", object, "is", "from", kPlaces[places[3]]},
    };
    std::vector<std::size_t> slots = {0, 1, 2, 3};
    std::shuffle(slots.begin(), slots.end(), g);
    ex.candidates.resize(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) ex.candidates[slots[i]] = cands[i];
    ex.gold_index = slots[0];
    out.push_back(std::move(ex));
  }
  return out;
}

std::string to_jsonl(std::span<const DialogueExample> examples) {
  std::string out;
  for (const auto& ex : examples) {
    nlohmann::json j;
    nlohmann::json ctx = nlohmann::json::array();
    for (const auto& u : ex.context) ctx.push_back({u.speaker, join(u.tokens)});
    j["context"] = ctx;
    j["responder"] = ex.responder;
    nlohmann::json opts = nlohmann::json::array();
    for (const auto& c : ex.candidates) opts.push_back(join(c));
    j["options"] = opts;
    if (ex.gold_index) j["answer"] = *ex.gold_index;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace fcm::synthetic
