#include "commands.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fcm/autodiff.hpp"
#include "fcm/errors.hpp"
#include "fcm/gradcheck.hpp"
#include "fcm/kernels.hpp"
#include "fcm/synthetic.hpp"
#include "fcm/trainer.hpp"
#include "json.hpp"

namespace fcm::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << content;
}

void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  validate(cfg);
}

TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  apply_overrides(cfg, sets);
  return cfg;
}

std::vector<corpus::DialogueExample> load_data(const std::string& path) {
  if (!fs::exists(path)) throw DataError("dataset not found: " + path);
  return corpus::load_jsonl(path);
}

void check_m(const std::vector<corpus::DialogueExample>& data, std::size_t m, const std::string& path) {
  if (!data.empty() && data[0].candidates.size() != m) {
    throw ConfigError(path + " has " + std::to_string(data[0].candidates.size()) + " options per example, config M = " +
                      std::to_string(m));
  }
}

json report_summary(const head::RankingReport& r) {
  return json{{"r_at_1", r.r_at_1}, {"r_at_2", r.r_at_2}, {"mrr", r.mrr}, {"n", r.n}};
}

struct TrainArgs {
  std::string config, train, dev, out;
  std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = resolve_config(a.config, a.sets);
  const auto train_set = load_data(a.train);
  const auto dev_set = load_data(a.dev);
  check_m(train_set, cfg.model.m, a.train);
  check_m(dev_set, cfg.model.m, a.dev);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  json manifest{
      {"config", to_text(cfg)},
      {"train", a.train},
      {"dev", a.dev},
      {"out", a.out},
      {"kernels", std::string(kernels::backend_name(kernels::active_backend()))},
      {"inputs",
       {{"config", a.config.empty() ? "" : git_blob_hash(read_file(a.config))},
        {"train", git_blob_hash(read_file(a.train))},
        {"dev", git_blob_hash(read_file(a.dev))}}},
  };
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  Trainer trainer(cfg, train_set, dev_set);
  std::ofstream log(dir / "epochs.jsonl", std::ios::trunc);
  double best = -1.0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    EpochLog entry;
    entry.epoch = e;
    entry.train_loss = trainer.run_epoch();
    entry.dev = trainer.evaluate_dev();
    log << to_json(entry).dump() << "\n";
    log.flush();
    err << "epoch " << e << " loss " << entry.train_loss << " dev R@1 " << entry.dev.r_at_1 << " MRR "
        << entry.dev.mrr << "\n";
    if (entry.dev.r_at_1 > best) {
      best = entry.dev.r_at_1;
      save_checkpoint(trainer.checkpoint(), dir / "best.ckpt");
    }
  }
  save_checkpoint(trainer.checkpoint(), dir / "last.ckpt");
  out << json{{"best_dev_r_at_1", best}, {"checkpoint", (dir / "best.ckpt").string()}}.dump() << "\n";
  return kOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data, const std::string& report_path, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto examples = load_data(data);
  check_m(examples, ckpt.config.model.m, data);
  const head::RankingReport report = evaluate(ckpt, examples);
  write_file(report_path, head::to_json(report).dump() + "\n");
  out << report_summary(report).dump() << "\n";
  return kOk;
}

int cmd_score(const std::string& ckpt_path, const std::string& data, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto examples = load_data(data);
  check_m(examples, ckpt.config.model.m, data);
  const auto probs = score(ckpt, examples);
  for (std::size_t b = 0; b < examples.size(); ++b) {
    json ranked = json::array();
    for (std::size_t i : head::rank_order(probs[b])) {
      std::string text;
      for (const auto& t : examples[b].candidates[i]) text += (text.empty() ? "" : " ") + t;
      ranked.push_back({{"candidate", i}, {"probability", probs[b][i]}, {"text", text}});
    }
    out << json{{"example", b}, {"ranking", ranked}}.dump() << "\n";
  }
  return kOk;
}

TrainConfig gradcheck_defaults() {
  TrainConfig cfg;
  cfg.model.d = 8;
  cfg.model.m = 4;
  cfg.model.n_layers = 1;
  cfg.model.n_heads = 2;
  cfg.model.l_ctx = 12;
  cfg.model.l_resp = 6;
  cfg.model.embedding_std = 0.5;
  return cfg;
}

int cmd_gradcheck(const std::string& config, const std::vector<std::string>& sets, double tol, double step,
                  const std::string& fault, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = config.empty() ? gradcheck_defaults() : load_config(config);
  apply_overrides(cfg, sets);
  if (fault == "sigmoid") {
    ad::debug::inject_fault(ad::debug::Fault::kSigmoidBackward);
  } else if (!fault.empty()) {
    throw ConfigError("unknown fault '" + fault + "'");
  }

  synthetic::RandomCorpusOptions opts;
  opts.examples = 2;
  opts.m = cfg.model.m;
  opts.vocab_words = 12;
  opts.utterances = 3;
  opts.utterance_len = 3;
  opts.response_len = 4;
  opts.seed = cfg.seed;
  const auto examples = synthetic::random_corpus(opts);
  const auto vocab = corpus::build_vocab(examples, 1);
  const auto batch = corpus::make_batch(examples, vocab, {cfg.model.l_ctx, cfg.model.l_resp});
  Rng rng(cfg.seed);
  FcmModel model(cfg.model, vocab.size(), rng);
  const std::vector<std::size_t> rows = {0, 1};

  const TapedObjective objective = [&](ad::Tape&, const BoundParams& bound) {
    return model.batch_loss(bound, batch, rows, cfg.lambda, nullptr).total;
  };
  const GradCheckReport report = finite_diff_check(objective, model.params(), step, tol);
  ad::debug::inject_fault(ad::debug::Fault::kNone);

  json params = json::array();
  for (const auto& p : report.params) {
    params.push_back({{"name", p.name},
                      {"max_rel_error", p.max_rel_error},
                      {"index", p.worst_index},
                      {"tape_grad", p.tape_grad},
                      {"numeric_grad", p.numeric_grad}});
  }
  out << json{{"passed", report.passed},
              {"max_rel_error", report.max_rel_error},
              {"worst_param", report.worst_param},
              {"tolerance", tol},
              {"step", step},
              {"scalars", model.params().scalar_count()},
              {"params", params}}
             .dump()
      << "\n";
  err << (report.passed ? "gradcheck passed" : "gradcheck FAILED") << ": max relative error "
      << report.max_rel_error << " at " << report.worst_param << "\n";
  return report.passed ? kOk : kNumericError;
}

struct AblationRow {
  const char* label;
  void (*apply)(ModelConfig&);
};

const std::vector<AblationRow>& ablation_rows() {
  static const std::vector<AblationRow> rows = {
      {"full", [](ModelConfig&) {}},
      {"w/o comparison", [](ModelConfig& m) { m.use_comparison = false; }},
      {"w/o history", [](ModelConfig& m) { m.use_history = false; }},
      {"w/o speaker", [](ModelConfig& m) { m.use_speaker = false; }},
      {"coarse-grained", [](ModelConfig& m) { m.variant = ComparisonVariant::kCoarseGrained; }},
      {"simple-add", [](ModelConfig& m) { m.variant = ComparisonVariant::kSimpleAdd; }},
      {"no-source", [](ModelConfig& m) { m.variant = ComparisonVariant::kNoSource; }},
      {"no-gate", [](ModelConfig& m) { m.variant = ComparisonVariant::kNoGate; }},
  };
  return rows;
}

int cmd_ablate(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig base = resolve_config(a.config, a.sets);
  const auto train_set = load_data(a.train);
  const auto dev_set = load_data(a.dev);
  check_m(train_set, base.model.m, a.train);
  check_m(dev_set, base.model.m, a.dev);

  std::string table;
  for (const auto& row : ablation_rows()) {
    TrainConfig cfg = base;
    row.apply(cfg.model);
    Trainer trainer(cfg, train_set, dev_set);
    head::RankingReport best;
    double best_r1 = -1.0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      trainer.run_epoch();
      auto dev = trainer.evaluate_dev();
      if (dev.r_at_1 > best_r1) {
        best_r1 = dev.r_at_1;
        best = std::move(dev);
      }
    }
    json line = report_summary(best);
    line["variant"] = row.label;
    table += line.dump() + "\n";
    err << row.label << ": R@1 " << best.r_at_1 << " R@2 " << best.r_at_2 << " MRR " << best.mrr << "\n";
  }
  out << table;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_file(fs::path(a.out) / "ablation.jsonl", table);
  }
  return kOk;
}

int cmd_synth(const std::string& kind, std::size_t n, std::size_t m, std::uint64_t seed, const std::string& path) {
  std::vector<corpus::DialogueExample> examples;
  if (kind == "probe") {
    examples = synthetic::consistency_probe(n, seed);
  } else if (kind == "random") {
    synthetic::RandomCorpusOptions opts;
    opts.examples = n;
    opts.m = m;
    opts.seed = seed;
    examples = synthetic::random_corpus(opts);
  } else {
    throw ConfigError("unknown corpus kind '" + kind + "'");
  }
  write_file(path, synthetic::to_jsonl(examples));
  return kOk;
}

}  // namespace

std::string git_blob_hash(const std::string& content) {
  const std::string framed = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(framed.data(), framed.size(), digest, &len, EVP_sha1(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fine-grained comparison model for multi-turn response selection"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model and write checkpoints");
  train->add_option("--config", train_args.config, "Config file (key = value)")->required();
  train->add_option("--train", train_args.train, "Training JSONL")->required();
  train->add_option("--dev", train_args.dev, "Dev JSONL")->required();
  train->add_option("--out", train_args.out, "Output directory")->required();
  train->add_option("--set", train_args.sets, "Override a config key: key=value");

  std::string ckpt, data, report;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled file");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--report", report, "Where to write the RankingReport JSON")->required();

  auto* scorer = app.add_subcommand("score", "Rank candidates; JSONL to stdout");
  scorer->add_option("--ckpt", ckpt)->required();
  scorer->add_option("--data", data)->required();

  std::string gc_config, fault;
  std::vector<std::string> gc_sets;
  double tol = 1e-4, step = 1e-5;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare tape gradients with finite differences");
  gradcheck->add_option("--config", gc_config, "Config file; defaults to a tiny model");
  gradcheck->add_option("--set", gc_sets, "Override a config key: key=value");
  gradcheck->add_option("--tol", tol, "Maximum relative error");
  gradcheck->add_option("--step", step, "Central difference step");
  gradcheck->add_option("--fault", fault, "Inject a broken gradient rule (sigmoid)")->group("");

  TrainArgs ablate_args;
  auto* ablate = app.add_subcommand("ablate", "Train every ablation variant and report dev metrics");
  ablate->add_option("--config", ablate_args.config)->required();
  ablate->add_option("--train", ablate_args.train)->required();
  ablate->add_option("--dev", ablate_args.dev)->required();
  ablate->add_option("--out", ablate_args.out, "Also write ablation.jsonl here");
  ablate->add_option("--set", ablate_args.sets, "Override a config key: key=value");

  std::string kind = "probe", synth_out;
  std::size_t synth_n = 100, synth_m = 4;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "Write a generated dataset");
  synth->add_option("--kind", kind, "probe | random");
  synth->add_option("--n", synth_n);
  synth->add_option("--m", synth_m, "Options per example (random only)");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out)->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(train_args, out, err);
    if (*eval) return cmd_eval(ckpt, data, report, out);
    if (*scorer) return cmd_score(ckpt, data, out);
    if (*gradcheck) return cmd_gradcheck(gc_config, gc_sets, tol, step, fault, out, err);
    if (*ablate) return cmd_ablate(ablate_args, out, err);
    if (*synth) return cmd_synth(kind, synth_n, synth_m, synth_seed, synth_out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kConfigError;
}

}  // namespace fcm::cli
