// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "datagen.hpp"
#include "evaluation.hpp"
#include "hypernet.hpp"
#include "vit.hpp"

namespace hl {

enum class Variant { hyperct, ew_baseline };
const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double lr = 3e-4;
  double weight_decay = 0;
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_every = 15;
  Variant variant = Variant::hyperct;

  void validate() const;
};

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

/// Uniform over the indices whose label is not missing.
std::size_t sample_task(std::span<const int> labels, std::mt19937_64& rng);

/// Independent RNG streams derived from the run seed.
std::mt19937_64 backbone_stream(std::uint64_t seed);
std::mt19937_64 hyper_stream(std::uint64_t seed);
std::mt19937_64 train_stream(std::uint64_t seed);

/// Frozen backbone, delta source (hypernetwork or shared EW factors) and one
/// linear head per task.
class Model {
 public:
  Model(const BackboneConfig& backbone, const HyperConfig& hyper, Variant variant, std::size_t num_tasks,
        std::uint64_t seed);

  Variant variant() const noexcept { return variant_; }
  std::size_t num_tasks() const noexcept { return num_tasks_; }
  const Backbone& backbone() const noexcept { return backbone_; }
  Backbone& backbone() noexcept { return backbone_; }
  const HyperNet* hyper() const noexcept { return hyper_.get(); }
  const HyperConfig& hyper_config() const noexcept { return hyper_cfg_; }

  /// Every trainable tensor, sharing nodes with the owning components.
  ParamStore& trainable() noexcept { return trainable_; }
  const ParamStore& trainable() const noexcept { return trainable_; }

  DeltaVars delta_graph(std::size_t task, std::mt19937_64* dropout_rng) const;
  /// Evaluation-time factors, dropout off.
  DeltaSet deltas(std::size_t task) const;

  /// 1×1 logit from cached token matrices, one per triplet.
  ag::Var logit_graph(const std::vector<Tensor>& tokens, std::size_t task, const DeltaVars& deltas) const;
  double logit(const std::vector<Tensor>& tokens, std::size_t task, const DeltaSet& deltas) const;
  /// n×1 logits for several samples sharing one task, in a single backbone pass.
  ag::Var logits_graph(const std::vector<const std::vector<Tensor>*>& samples, std::size_t task,
                       const DeltaVars& deltas) const;

  /// Patch-embedded triplets of a volume; the stem is frozen so these can be cached.
  std::vector<Tensor> tokenize(const data::Volume& v) const;

  std::map<std::string, Tensor> snapshot() const;
  void restore(const std::map<std::string, Tensor>& tensors);

 private:
  BackboneConfig backbone_cfg_;
  HyperConfig hyper_cfg_;
  Variant variant_;
  std::size_t num_tasks_;
  Backbone backbone_;
  std::unique_ptr<HyperNet> hyper_;
  ParamStore own_;
  ParamStore trainable_;
};

struct Sample {
  std::string id;
  std::vector<int> labels;
  std::vector<Tensor> tokens;
};

struct BatchItem {
  const Sample* sample = nullptr;
  std::size_t task = 0;
};

/// Mean BCE over the items. Deltas are generated once per distinct task, in
/// order of first appearance, with dropout drawn from rng when non-null.
ag::Var batch_loss(const Model& model, const std::vector<BatchItem>& items, std::mt19937_64* dropout_rng);

struct BatchResult {
  double loss = 0;
  GradMap grads;
  std::vector<std::size_t> tasks;
};

/// Samples one available task per sample, then evaluates and differentiates the batch loss.
BatchResult loss_for_batch(const std::vector<const Sample*>& batch, Model& model, std::mt19937_64& rng);

struct AdamState {
  std::map<std::string, std::vector<double>> m, v;
  std::size_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Decoupled weight decay then the bias-corrected Adam update. Parameters
/// without a gradient are left alone.
void optimizer_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr, double weight_decay);

/// Sigmoid scores for every non-missing (sample, task) pair.
std::vector<eval::ScoreRecord> score_samples(const Model& model, const std::vector<Sample>& samples,
                                             unsigned threads = 1);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  std::vector<std::optional<double>> val_auc;
  std::optional<double> val_auc_mean;
};
std::string to_jsonl(const EpochLog& e);

/// Per-task AUC (empty when a class is absent) and their mean over defined tasks.
std::pair<std::vector<std::optional<double>>, std::optional<double>> task_aucs(
    const std::vector<eval::ScoreRecord>& scores, std::size_t num_tasks);

struct TrainResult {
  std::map<std::string, Tensor> best;
  std::size_t best_epoch = 0;
  std::string best_rng_state;
  std::vector<EpochLog> log;
};

TrainResult train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& cfg, std::uint64_t seed, const std::function<void(const EpochLog&)>& on_epoch = {});

/// Reads manifest.jsonl and splits.json from a dataset directory.
struct DataIndex {
  std::vector<data::ManifestRecord> manifest;
  data::Splits splits;
};
DataIndex read_data_index(const std::filesystem::path& dir, std::size_t num_tasks);

/// Loads and tokenizes the listed samples.
std::vector<Sample> load_samples(const Model& model, const std::filesystem::path& dir, const DataIndex& index,
                                 const std::vector<std::string>& ids, unsigned threads = 1);

}  // namespace hl
