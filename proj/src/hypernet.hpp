// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lora.hpp"
#include "params.hpp"
#include "vit.hpp"

namespace hl {

enum class TrunkKind {
  residual,  // mixer + 2 residual MLP blocks + output projection
  mlp,       // two hidden SiLU layers of width mlp_hidden feeding the heads
};

enum class HeadInit {
  zero,  // every head weight and bias is zero: B = A = 0
  lora,  // B-producing rows random, A-producing rows zero: ΔW = 0 but trainable
};

struct HyperConfig {
  std::size_t rank = 4;
  double alpha = 4;
  std::size_t task_dim = 64;
  std::size_t pos_dim = 16;
  std::size_t latent = 32;
  std::size_t head_in = 64;
  double dropout = 0.05;
  TrunkKind trunk = TrunkKind::residual;
  std::size_t mlp_hidden = 64;
  HeadInit head_init = HeadInit::lora;

  void validate(const std::vector<ModuleDescriptor>& modules) const;
  std::size_t head_input_size() const { return trunk == TrunkKind::residual ? head_in : mlp_hidden; }
  std::size_t head_output_size(const ModuleDescriptor& m) const { return rank * (m.d_in + m.d_out); }
};

struct ParamSpec {
  std::string path;
  Shape shape;
};

/// Census of trainable scalars per component.
struct ParamCensus {
  std::uint64_t task_embeddings = 0;
  std::uint64_t positional = 0;
  std::uint64_t trunk = 0;
  std::uint64_t heads = 0;

  std::uint64_t total() const { return task_embeddings + positional + trunk + heads; }
  friend bool operator==(const ParamCensus&, const ParamCensus&) = default;
};

/// Hypernetwork producing per-module LoRA factors from (task embedding, module position).
/// Owns the task-embedding table and the module positional table.
class HyperNet {
 public:
  HyperNet(const HyperConfig& cfg, std::vector<ModuleDescriptor> modules, std::size_t num_tasks, std::mt19937_64& rng);

  /// Parameter layout without allocating it; the reference-size model is far too large to build.
  static std::vector<ParamSpec> plan(const HyperConfig& cfg, const std::vector<ModuleDescriptor>& modules,
                                     std::size_t num_tasks);
  static ParamCensus census(const std::vector<ParamSpec>& plan);
  /// The same counts from closed-form expressions in the config dimensions.
  static ParamCensus closed_form(const HyperConfig& cfg, const std::vector<ModuleDescriptor>& modules,
                                 std::size_t num_tasks);

  const HyperConfig& config() const noexcept { return cfg_; }
  const std::vector<ModuleDescriptor>& modules() const noexcept { return modules_; }
  std::size_t num_tasks() const noexcept { return num_tasks_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamStore& params() noexcept { return params_; }

  Tensor task_embedding(std::size_t task) const;

  /// Factors for one module, conditioned on an explicit embedding vector (dropout off).
  LoraFactors generate(const Tensor& task_embedding, const ModuleDescriptor& m) const;
  DeltaSet generate_all(const Tensor& task_embedding) const;
  DeltaSet generate_for_task(std::size_t task) const;

  /// Differentiable generation for a stored task row. Dropout is active when rng is non-null.
  DeltaVars generate_graph(std::size_t task, std::mt19937_64* dropout_rng) const;

 private:
  ag::Var dense(const ag::Var& x, const std::string& prefix) const;
  ag::Var trunk(const ag::Var& x, std::mt19937_64* rng) const;
  ag::Var head(const ag::Var& h_row, const ModuleDescriptor& m) const;
  LoraFactors split(const Tensor& head_out, const ModuleDescriptor& m) const;
  LoraVars split(const ag::Var& head_out, const ModuleDescriptor& m) const;

  HyperConfig cfg_;
  std::vector<ModuleDescriptor> modules_;
  std::size_t num_tasks_;
  ParamStore params_;
};

/// Final-projection cost of generating one square D×D target through rank-r factors.
std::uint64_t param_count_lora(std::uint64_t hidden, std::uint64_t dim, std::uint64_t rank);
/// Final-projection cost of regressing the full D×D matrix.
std::uint64_t param_count_full(std::uint64_t hidden, std::uint64_t dim);

}  // namespace hl
