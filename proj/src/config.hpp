// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "analysis.hpp"
#include "datagen.hpp"
#include "hypernet.hpp"
#include "json.hpp"
#include "training.hpp"
#include "vit.hpp"

namespace hl {

struct EvalConfig {
  std::string split = "test";
  std::size_t bootstrap_iters = 1000;
  double dca_t_lo = eval::kDcaLow;
  double dca_t_hi = eval::kDcaHigh;
  std::size_t dca_steps = 16;
};

struct AnalysisConfig {
  analysis::FlattenMode mode = analysis::FlattenMode::materialized;
  std::size_t k_min = 2;
  std::size_t k_max = 8;
};

/// Sections data, backbone, hyperlora, train, eval, analysis; every field
/// optional except the top-level seed.
struct RunConfig {
  std::uint64_t seed = 0;
  data::SyntheticSpec data;
  BackboneConfig backbone;
  HyperConfig hyper;
  TrainConfig train;
  EvalConfig eval;
  AnalysisConfig analysis;

  std::size_t num_tasks() const { return data.num_tasks(); }
  void validate() const;
};

/// Rejects unknown keys, wrong types and missing seed with a usage error naming the key.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every field, defaults resolved.
nlohmann::json to_json(const RunConfig& c);
std::string effective_config_text(const RunConfig& c);

/// The reference-scale configuration used by the parameter audit.
RunConfig reference_config();

}  // namespace hl
