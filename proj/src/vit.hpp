// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "lora.hpp"
#include "params.hpp"

namespace hl {

struct BackboneConfig {
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t patch_size = 8;
  std::size_t mlp_ratio = 4;
  std::size_t image_side = 24;
  double init_std = 0.02;

  void validate() const;
  std::size_t patches_per_side() const { return image_side / patch_size; }
  std::size_t num_patches() const { return patches_per_side() * patches_per_side(); }
  std::size_t seq_len() const { return num_patches() + 1; }
  std::size_t mlp_dim() const { return mlp_ratio * hidden_dim; }
};

enum class ModuleKind { q = 0, k, v, attn_out, fc1, fc2 };
inline constexpr std::size_t kModulesPerBlock = 6;
const char* to_string(ModuleKind kind);

/// One LoRA injection point. flat_index = layer * 6 + kind ordinal.
struct ModuleDescriptor {
  std::size_t flat_index = 0;
  std::size_t layer = 0;
  ModuleKind kind = ModuleKind::q;
  std::size_t d_in = 0;
  std::size_t d_out = 0;

  friend bool operator==(const ModuleDescriptor&, const ModuleDescriptor&) = default;
};

std::vector<ModuleDescriptor> enumerate_target_modules(const BackboneConfig& cfg);

/// Pre-norm ViT with frozen, randomly initialized weights. Input is one
/// slice triplet laid out H×W×3; output is the final-norm CLS token.
class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, std::mt19937_64& rng);

  const BackboneConfig& config() const noexcept { return cfg_; }
  const std::vector<ModuleDescriptor>& modules() const noexcept { return modules_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamStore& params() noexcept { return params_; }
  Backbone clone() const;

  /// Token matrix (num_patches + 1)×D: CLS row first, positional embeddings added.
  Tensor patchify(const Tensor& image) const;

  /// Pooled feature of length D.
  Tensor forward(const Tensor& image, const DeltaSet& deltas = {}) const;
  /// Mean of the pooled features of several triplets.
  Tensor forward_scan(const std::vector<Tensor>& triplets, const DeltaSet& deltas = {}) const;

  /// Differentiable path starting from precomputed patchify() output. Returns 1×D.
  ag::Var forward_tokens(const Tensor& tokens, const DeltaVars& deltas) const;
  /// Several token matrices at once. Returns n×D, one final-norm CLS row each.
  ag::Var forward_batch(const std::vector<const Tensor*>& tokens, const DeltaVars& deltas) const;

  void check_deltas(const DeltaSet& deltas) const;

  static std::string module_prefix(const ModuleDescriptor& m);

 private:
  Backbone() = default;
  ag::Var attention(const ag::Var& x, std::size_t layer, const DeltaVars& deltas) const;
  ag::Var project(const ag::Var& x, const ModuleDescriptor& m, const DeltaVars& deltas) const;

  void bind();

  struct LayerVars {
    ag::Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  };

  BackboneConfig cfg_;
  std::vector<ModuleDescriptor> modules_;
  ParamStore params_;
  // Cached handles into params_, rebuilt by bind().
  std::vector<ag::Var> weights_, biases_;
  std::vector<LayerVars> layers_;
  ag::Var final_gamma_, final_beta_;
};

}  // namespace hl
