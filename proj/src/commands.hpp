// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "config.hpp"
#include "training.hpp"

namespace hl {

namespace fs = std::filesystem;

using ProgressFn = std::function<void(const std::string&)>;

void cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir);

/// Writes checkpoint.bin (best validation epoch), metrics.jsonl and config.json.
void cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir, const ProgressFn& progress = {});

struct EvalOptions {
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> data_dir;
  std::optional<fs::path> scores;  // bypasses the model
  std::optional<std::string> split;
  std::optional<std::size_t> bootstrap_iters;
  std::optional<std::uint64_t> seed;
};

/// Writes auc.csv and config.json, plus scores.jsonl when a model was scored.
void cmd_eval(const EvalOptions& opts, const fs::path& out_dir);

/// One dca_task<k>.csv per task in the score file.
void cmd_dca(const fs::path& scores, const fs::path& out_dir, double t_lo, double t_hi, std::size_t steps);

/// Writes pca.csv, mds.csv, clusters.json and config.json.
void cmd_analyze(const fs::path& checkpoint, const fs::path& out_dir,
                 std::optional<analysis::FlattenMode> mode = std::nullopt);

/// Audit for the given config and the reference config; returns the printable
/// table and writes param_audit.json and config.json when out_dir is set.
std::string cmd_param_audit(const RunConfig& cfg, const std::optional<fs::path>& out_dir);
nlohmann::json param_audit_json(const RunConfig& cfg);

struct LoadedModel {
  RunConfig config;
  Checkpoint checkpoint;
  std::unique_ptr<Model> model;
};
LoadedModel load_model(const fs::path& checkpoint);

/// Per-task rows of the weight-space matrix.
analysis::Matrix task_weight_matrix(const Model& model, analysis::FlattenMode mode);

}  // namespace hl
