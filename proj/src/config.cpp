#include "fcm/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fcm/errors.hpp"

namespace fcm {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  try {
    std::size_t used = 0;
    const double out = std::stod(s, &used);
    if (used == s.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + s + "'");
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(v) + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(ComparisonVariant v) {
  switch (v) {
    case ComparisonVariant::kFull: return "full";
    case ComparisonVariant::kCoarseGrained: return "coarse_grained";
    case ComparisonVariant::kSimpleAdd: return "simple_add";
    case ComparisonVariant::kNoSource: return "no_source";
    case ComparisonVariant::kNoGate: return "no_gate";
  }
  return "full";
}

ComparisonVariant parse_variant(std::string_view name) {
  for (auto v : {ComparisonVariant::kFull, ComparisonVariant::kCoarseGrained, ComparisonVariant::kSimpleAdd,
                 ComparisonVariant::kNoSource, ComparisonVariant::kNoGate}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown comparison_variant '" + std::string(name) + "'");
}

void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view value) {
  ModelConfig& m = cfg.model;
  if (key == "d") m.d = to_size(key, value);
  else if (key == "n_layers") m.n_layers = to_size(key, value);
  else if (key == "n_heads") m.n_heads = to_size(key, value);
  else if (key == "ffn_dim") m.ffn_dim = to_size(key, value);
  else if (key == "M") m.m = to_size(key, value);
  else if (key == "L_ctx") m.l_ctx = to_size(key, value);
  else if (key == "L_resp") m.l_resp = to_size(key, value);
  else if (key == "dropout") m.dropout = to_double(key, value);
  else if (key == "embedding_std") m.embedding_std = to_double(key, value);
  else if (key == "comparison_variant") m.variant = parse_variant(value);
  else if (key == "use_comparison") m.use_comparison = to_bool(key, value);
  else if (key == "use_history") m.use_history = to_bool(key, value);
  else if (key == "use_speaker") m.use_speaker = to_bool(key, value);
  else if (key == "learning_rate") cfg.learning_rate = to_double(key, value);
  else if (key == "lambda") cfg.lambda = to_double(key, value);
  else if (key == "batch_size") cfg.batch_size = to_size(key, value);
  else if (key == "epochs") cfg.epochs = to_size(key, value);
  else if (key == "seed") cfg.seed = to_size(key, value);
  else if (key == "min_count") cfg.min_count = to_size(key, value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void validate(const TrainConfig& cfg) {
  const ModelConfig& m = cfg.model;
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(m.d >= 1, "d must be >= 1");
  require(m.n_heads >= 1 && m.d % m.n_heads == 0, "d must be divisible by n_heads");
  require(m.m >= 2, "M must be >= 2");
  require(m.l_ctx >= 1 && m.l_resp >= 1, "L_ctx and L_resp must be >= 1");
  require(m.dropout >= 0.0 && m.dropout < 1.0, "dropout must be in [0, 1)");
  require(m.embedding_std > 0.0, "embedding_std must be positive");
  require(cfg.learning_rate > 0.0, "learning_rate must be positive");
  require(cfg.lambda >= 0.0, "lambda must be non-negative");
  require(cfg.batch_size >= 1, "batch_size must be >= 1");
  require(cfg.epochs >= 1, "epochs must be >= 1");
  require(cfg.min_count >= 1, "min_count must be >= 1");
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    std::string_view sv(line);
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    sv = trim(sv);
    if (sv.empty()) continue;
    const auto eq = sv.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    apply_setting(cfg, trim(sv.substr(0, eq)), trim(sv.substr(eq + 1)));
  }
  validate(cfg);
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const TrainConfig& cfg) {
  const ModelConfig& m = cfg.model;
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "d = " << m.d << "\n"
    << "n_layers = " << m.n_layers << "\n"
    << "n_heads = " << m.n_heads << "\n"
    << "ffn_dim = " << m.ffn_dim << "\n"
    << "M = " << m.m << "\n"
    << "L_ctx = " << m.l_ctx << "\n"
    << "L_resp = " << m.l_resp << "\n"
    << "dropout = " << fmt_double(m.dropout) << "\n"
    << "embedding_std = " << fmt_double(m.embedding_std) << "\n"
    << "comparison_variant = " << to_string(m.variant) << "\n"
    << "use_comparison = " << b(m.use_comparison) << "\n"
    << "use_history = " << b(m.use_history) << "\n"
    << "use_speaker = " << b(m.use_speaker) << "\n"
    << "learning_rate = " << fmt_double(cfg.learning_rate) << "\n"
    << "lambda = " << fmt_double(cfg.lambda) << "\n"
    << "batch_size = " << cfg.batch_size << "\n"
    << "epochs = " << cfg.epochs << "\n"
    << "seed = " << cfg.seed << "\n"
    << "min_count = " << cfg.min_count << "\n";
  return o.str();
}

}  // namespace fcm
