// simspoof: train, evaluate, self-check and synthetic-data generation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "simspoof/selfcheck.hpp"
#include "simspoof/trainer.hpp"

namespace fs = std::filesystem;
using namespace simspoof;

namespace {

KeyValues read_config(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValues kv = KeyValues::load(path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + o + "'");
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  return kv;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Scores one partition and writes scores.txt, report.txt and report.csv.
BreakdownReport evaluate_partition(Model& model, const Corpus& corpus, Partition part, const fs::path& dir,
                                   const std::string& system) {
  const auto ids = corpus.indices(part);
  if (ids.empty()) throw std::invalid_argument("data has no " + to_string(part) + " records");
  const ScoreSet scores = score_records(model, corpus, ids);
  write_scores((dir / "scores.txt").string(), scores);
  const BreakdownReport report = breakdown_report(scores, model.config().tdcf, corpus.attack_ids(part), system);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  write_text(dir / "report.txt", report.text_table());
  write_text(dir / "report.csv", report.csv());
  return report;
}

struct RunSummary {
  std::uint64_t seed;
  TrainResult result;
  std::optional<BreakdownReport> eval;
};

RunSummary run_training(const TrainConfig& cfg, std::uint64_t seed, const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  Model model(cfg, seed);
  std::ofstream log(dir / "train_log.csv");
  log << kEpochLogHeader << '\n';
  std::cout << "seed " << seed << ": " << model.params.parameter_count() << " parameters\n" << kEpochLogHeader << '\n';
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    log << e.csv() << '\n' << std::flush;
    std::cout << e.csv() << '\n' << std::flush;
  };
  RunSummary summary{seed, train(model, corpus, hooks), std::nullopt};
  save_model((dir / "model.ckpt").string(), model);
  std::cout << "best epoch " << summary.result.best_epoch << " dev EER " << summary.result.best_dev_eer << '\n';
  if (!corpus.indices(Partition::eval).empty()) {
    summary.eval = evaluate_partition(model, corpus, Partition::eval, dir, "seed" + std::to_string(seed));
    std::cout << summary.eval->text_table();
  }
  return summary;
}

int cmd_train(const std::string& config, const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed,
              std::vector<std::uint64_t> seeds, const std::string& out) {
  const TrainConfig cfg = TrainConfig::from_key_values(read_config(config, overrides));
  if (seed) seeds = {*seed};
  if (seeds.empty()) seeds = {cfg.seed};
  const Corpus corpus = load_data(cfg.data);
  std::vector<RunSummary> runs;
  for (auto s : seeds) runs.push_back(run_training(cfg, s, corpus, fs::path(out) / ("seed_" + std::to_string(s))));
  if (runs.size() > 1) {
    // Best of several seeds, selected on the development set.
    const auto best = std::min_element(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
      return a.result.best_dev_eer < b.result.best_dev_eer;
    });
    std::cout << "best seed " << best->seed << " (dev EER " << best->result.best_dev_eer << ")";
    if (best->eval) std::cout << ", eval pooled EER " << best->eval->pooled_eer << ", min t-DCF " << best->eval->min_tdcf;
    std::cout << '\n';
  }
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data, const std::string& partition,
                 const std::string& out) {
  auto model = load_model(checkpoint);
  DataConfig dc = model->config().data;
  if (data != "synthetic") dc.source = data;
  const Corpus corpus = load_data(dc);
  fs::create_directories(out);
  const auto report = evaluate_partition(*model, corpus, partition_from_string(partition), out,
                                         fs::path(checkpoint).stem().string());
  std::cout << report.text_table();
  return 0;
}

int cmd_gen_data(const std::string& config, const std::vector<std::string>& overrides, const std::string& out) {
  const TrainConfig cfg = TrainConfig::from_key_values(read_config(config, overrides));
  const Corpus corpus = generate_synthetic_corpus(cfg.data.synth);
  export_corpus(corpus, out);
  for (const auto& a : corpus.attacks) {
    std::cout << a.id << ' ' << to_string(a.family) << ' ' << a.frequency_hz << " Hz level " << a.level
              << (a.unseen ? " (eval only)" : "") << '\n';
  }
  std::cout << corpus.records.size() << " trials written to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spoofing countermeasure toolkit: SimAM RawNet encoder, AAM and episodic relation losses"};
  app.require_subcommand(1);

  std::string config, out = "runs", checkpoint, data = "synthetic", partition = "eval";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;

  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", config, "key = value config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", seed, "random seed (overrides the config)");
  train_cmd->add_option("--seeds", seeds, "comma-separated seeds; reports the best on dev")->delimiter(',');
  train_cmd->add_option("--set", overrides, "extra key=value overrides");
  train_cmd->add_option("--out", out, "output directory")->capture_default_str();
  train_cmd->get_option("--seed")->excludes(train_cmd->get_option("--seeds"));

  auto* eval_cmd = app.add_subcommand("evaluate", "score a partition with a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data, "'synthetic' (the checkpoint's generator) or an exported corpus directory")
      ->capture_default_str();
  eval_cmd->add_option("--partition", partition, "train|dev|eval")->capture_default_str();
  eval_cmd->add_option("--out", out, "output directory for scores and reports")->capture_default_str();

  auto* check_cmd = app.add_subcommand("selfcheck", "run the gradient and oracle checks");

  auto* gen_cmd = app.add_subcommand("gen-data", "export the synthetic corpus as WAV plus protocol files");
  gen_cmd->add_option("--config", config, "key = value config file")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--set", overrides, "extra key=value overrides");
  gen_cmd->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return cmd_train(config, overrides, seed, seeds, out);
    if (*eval_cmd) return cmd_evaluate(checkpoint, data, partition, out);
    if (*check_cmd) return print_selfcheck(std::cout, selfcheck()) ? 0 : 1;
    if (*gen_cmd) return cmd_gen_data(config, overrides, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
