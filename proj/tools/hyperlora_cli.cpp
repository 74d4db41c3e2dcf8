// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hyperlora/hyperlora.h"

namespace {

int report(hl_status s) {
  if (s != HL_OK) std::fprintf(stderr, "error: %s\n", hl_last_error());
  return static_cast<int>(s);
}

struct Config {
  hl_config* ptr = nullptr;
  ~Config() { hl_config_free(ptr); }
};

void print_progress(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hypernetwork-generated LoRA for multi-task screening"};
  app.set_version_flag("--version", std::string(hl_version()));
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, checkpoint, scores, split, mode;
  std::optional<long long> bootstrap_iters;
  std::optional<unsigned long long> seed;
  double t_lo = 0.05, t_hi = 0.80;
  std::size_t steps = 16;
  bool quiet = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--config", config_path, "Run config JSON")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train and keep the best validation checkpoint");
  train->add_option("--config", config_path, "Run config JSON")->required();
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  auto* ev = app.add_subcommand("eval", "Per-task AUC with bootstrap intervals");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file");
  ev->add_option("--data", data_dir, "Dataset directory");
  ev->add_option("--scores", scores, "Score file to evaluate instead of a model");
  ev->add_option("--out", out_dir, "Output directory")->required();
  ev->add_option("--split", split, "train, val or test");
  ev->add_option("--bootstrap-iters", bootstrap_iters, "Bootstrap iterations (0 disables the intervals)")
      ->check(CLI::NonNegativeNumber);
  ev->add_option("--seed", seed, "Bootstrap seed");

  auto* dca = app.add_subcommand("dca", "Decision-curve tables per task");
  dca->add_option("--scores", scores, "Score file")->required();
  dca->add_option("--out", out_dir, "Output directory")->required();
  dca->add_option("--t-lo", t_lo, "Lowest threshold")->capture_default_str();
  dca->add_option("--t-hi", t_hi, "Highest threshold")->capture_default_str();
  dca->add_option("--steps", steps, "Grid points")->capture_default_str();

  auto* an = app.add_subcommand("analyze", "PCA, MDS and clustering of per-task LoRA weights");
  an->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  an->add_option("--out", out_dir, "Output directory")->required();
  an->add_option("--mode", mode, "factors or materialized")->check(CLI::IsMember({"factors", "materialized"}));

  auto* audit = app.add_subcommand("param-audit", "Parameter census against closed forms");
  audit->add_option("--config", config_path, "Run config JSON")->required();
  audit->add_option("--out", out_dir, "Optional output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(HL_ERR_USAGE);
  }

  if (gen->parsed() || train->parsed() || audit->parsed()) {
    Config cfg;
    if (const hl_status s = hl_config_load(config_path.c_str(), &cfg.ptr); s != HL_OK) return report(s);
    if (gen->parsed()) return report(hl_gen_data(cfg.ptr, out_dir.c_str()));
    if (train->parsed())
      return report(hl_train(cfg.ptr, data_dir.c_str(), out_dir.c_str(), quiet ? nullptr : print_progress, nullptr));
    char* text = nullptr;
    const hl_status s = hl_param_audit(cfg.ptr, out_dir.empty() ? nullptr : out_dir.c_str(), &text);
    if (s == HL_OK) std::fputs(text, stdout);
    hl_string_free(text);
    return report(s);
  }
  if (ev->parsed()) {
    hl_eval_options o;
    hl_eval_options_init(&o);
    if (!checkpoint.empty()) o.checkpoint = checkpoint.c_str();
    if (!data_dir.empty()) o.data_dir = data_dir.c_str();
    if (!scores.empty()) o.scores_path = scores.c_str();
    if (!split.empty()) o.split = split.c_str();
    if (bootstrap_iters) o.bootstrap_iters = *bootstrap_iters;
    if (seed) {
      o.seed = *seed;
      o.has_seed = 1;
    }
    return report(hl_eval(&o, out_dir.c_str()));
  }
  if (dca->parsed()) return report(hl_dca(scores.c_str(), out_dir.c_str(), t_lo, t_hi, steps));
  return report(hl_analyze(checkpoint.c_str(), out_dir.c_str(), mode.empty() ? nullptr : mode.c_str()));
}
