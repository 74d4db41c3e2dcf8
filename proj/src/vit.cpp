// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "vit.hpp"

#include <algorithm>
#include <cmath>

#include "ops.hpp"

namespace hl {

void BackboneConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::usage, "backbone config: " + msg); };
  if (hidden_dim == 0 || num_layers == 0 || num_heads == 0 || patch_size == 0 || mlp_ratio == 0 || image_side == 0)
    bad("all sizes must be positive");
  if (hidden_dim % num_heads != 0) bad("hidden_dim must be divisible by num_heads");
  if (image_side % patch_size != 0) bad("image_side must be divisible by patch_size");
  if (!(init_std > 0)) bad("init_std must be positive");
}

const char* to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::q: return "q";
    case ModuleKind::k: return "k";
    case ModuleKind::v: return "v";
    case ModuleKind::attn_out: return "attn_out";
    case ModuleKind::fc1: return "fc1";
    case ModuleKind::fc2: return "fc2";
  }
  return "?";
}

std::vector<ModuleDescriptor> enumerate_target_modules(const BackboneConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.hidden_dim, h = cfg.mlp_dim();
  std::vector<ModuleDescriptor> out;
  out.reserve(cfg.num_layers * kModulesPerBlock);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    for (std::size_t k = 0; k < kModulesPerBlock; ++k) {
      const auto kind = static_cast<ModuleKind>(k);
      const std::size_t d_in = kind == ModuleKind::fc2 ? h : d;
      const std::size_t d_out = kind == ModuleKind::fc1 ? h : d;
      out.push_back({l * kModulesPerBlock + k, l, kind, d_in, d_out});
    }
  }
  return out;
}

std::string Backbone::module_prefix(const ModuleDescriptor& m) {
  return "backbone.blocks." + std::to_string(m.layer) + "." + to_string(m.kind);
}

Backbone::Backbone(const BackboneConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), modules_(enumerate_target_modules(cfg)) {
  const std::size_t d = cfg.hidden_dim;
  const std::size_t patch_in = cfg.patch_size * cfg.patch_size * 3;
  const double std = cfg.init_std;
  params_.add("backbone.cls", truncated_normal({1, d}, std, rng), false);
  params_.add("backbone.pos", truncated_normal({cfg.seq_len(), d}, std, rng), false);
  params_.add("backbone.patch.weight", truncated_normal({patch_in, d}, std, rng), false);
  params_.add("backbone.patch.bias", Tensor({d}), false);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::string p = "backbone.blocks." + std::to_string(l);
    params_.add(p + ".ln1.gamma", Tensor({d}, real(1)), false);
    params_.add(p + ".ln1.beta", Tensor({d}), false);
    params_.add(p + ".ln2.gamma", Tensor({d}, real(1)), false);
    params_.add(p + ".ln2.beta", Tensor({d}), false);
    for (std::size_t k = 0; k < kModulesPerBlock; ++k) {
      const auto& m = modules_[l * kModulesPerBlock + k];
      params_.add(module_prefix(m) + ".weight", truncated_normal({m.d_in, m.d_out}, std, rng), false);
      params_.add(module_prefix(m) + ".bias", Tensor({m.d_out}), false);
    }
  }
  params_.add("backbone.ln_f.gamma", Tensor({d}, real(1)), false);
  params_.add("backbone.ln_f.beta", Tensor({d}), false);
  bind();
}

void Backbone::bind() {
  weights_.clear();
  biases_.clear();
  layers_.clear();
  for (const auto& m : modules_) {
    weights_.push_back(params_.get(module_prefix(m) + ".weight"));
    biases_.push_back(params_.get(module_prefix(m) + ".bias"));
  }
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "backbone.blocks." + std::to_string(l);
    layers_.push_back({params_.get(p + ".ln1.gamma"), params_.get(p + ".ln1.beta"), params_.get(p + ".ln2.gamma"),
                       params_.get(p + ".ln2.beta")});
  }
  final_gamma_ = params_.get("backbone.ln_f.gamma");
  final_beta_ = params_.get("backbone.ln_f.beta");
}

Backbone Backbone::clone() const {
  Backbone b;
  b.cfg_ = cfg_;
  b.modules_ = modules_;
  b.params_ = params_.clone();
  b.bind();
  return b;
}

Tensor Backbone::patchify(const Tensor& image) const {
  const std::size_t side = cfg_.image_side, p = cfg_.patch_size, n = cfg_.patches_per_side();
  if (image.shape() != Shape{side, side, 3})
    fail(ErrorKind::usage, "backbone input must be " + shape_str({side, side, 3}) + ", got " + shape_str(image.shape()));
  const std::size_t patch_in = p * p * 3;
  Tensor flat({n * n, patch_in});
  for (std::size_t py = 0; py < n; ++py)
    for (std::size_t px = 0; px < n; ++px) {
      real* row = flat.data().data() + (py * n + px) * patch_in;
      std::size_t c = 0;
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx)
          for (std::size_t ch = 0; ch < 3; ++ch) row[c++] = image[((py * p + dy) * side + px * p + dx) * 3 + ch];
    }
  const Tensor proj = ops::add_row(ops::matmul(flat, params_.get("backbone.patch.weight").value()),
                                   params_.get("backbone.patch.bias").value());
  const Tensor& pos = params_.get("backbone.pos").value();
  const Tensor& cls = params_.get("backbone.cls").value();
  const std::size_t d = cfg_.hidden_dim;
  Tensor tokens({cfg_.seq_len(), d});
  for (std::size_t j = 0; j < d; ++j) tokens(0, j) = cls[j] + pos(0, j);
  for (std::size_t i = 0; i < n * n; ++i)
    for (std::size_t j = 0; j < d; ++j) tokens(i + 1, j) = proj(i, j) + pos(i + 1, j);
  return tokens;
}

void Backbone::check_deltas(const DeltaSet& deltas) const {
  for (const auto& [idx, f] : deltas) {
    if (idx >= modules_.size())
      fail(ErrorKind::usage, "delta for module " + std::to_string(idx) + " but only " + std::to_string(modules_.size()) +
                                 " modules exist");
    const auto& m = modules_[idx];
    if (f.b.shape() != Shape{m.d_in, f.rank} || f.a.shape() != Shape{f.rank, m.d_out})
      fail(ErrorKind::usage, "delta for module " + std::to_string(idx) + " has shapes " + shape_str(f.b.shape()) + " / " +
                                 shape_str(f.a.shape()) + ", expected d_in=" + std::to_string(m.d_in) +
                                 " d_out=" + std::to_string(m.d_out));
  }
}

ag::Var Backbone::project(const ag::Var& x, const ModuleDescriptor& m, const DeltaVars& deltas) const {
  const auto it = deltas.find(m.flat_index);
  if (it == deltas.end()) return ag::linear(x, weights_[m.flat_index], biases_[m.flat_index]);
  const LoraVars& f = it->second;
  return ag::linear(x, weights_[m.flat_index], biases_[m.flat_index], f.b, f.a, f.scale);
}

ag::Var Backbone::attention(const ag::Var& x, std::size_t layer, const DeltaVars& deltas) const {
  const std::size_t base = layer * kModulesPerBlock;
  const ag::Var q = project(x, modules_[base + 0], deltas);
  const ag::Var k = project(x, modules_[base + 1], deltas);
  const ag::Var v = project(x, modules_[base + 2], deltas);
  return project(ag::multi_head_attention(q, k, v, cfg_.seq_len(), cfg_.num_heads), modules_[base + 3], deltas);
}

ag::Var Backbone::forward_tokens(const Tensor& tokens, const DeltaVars& deltas) const {
  return forward_batch({&tokens}, deltas);
}

ag::Var Backbone::forward_batch(const std::vector<const Tensor*>& tokens, const DeltaVars& deltas) const {
  if (tokens.empty()) fail(ErrorKind::usage, "forward_batch: no token matrices");
  const std::size_t t = cfg_.seq_len(), d = cfg_.hidden_dim, n = tokens.size();
  Tensor stacked({n * t, d});
  for (std::size_t s = 0; s < n; ++s) {
    if (tokens[s]->shape() != Shape{t, d})
      fail(ErrorKind::usage, "token matrix has shape " + shape_str(tokens[s]->shape()));
    std::copy(tokens[s]->data().begin(), tokens[s]->data().end(), stacked.data().begin() + s * t * d);
  }
  ag::Var x = ag::Var::constant(std::move(stacked));
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    const LayerVars& lv = layers_[l];
    x = ag::add(x, attention(ag::layer_norm(x, lv.ln1_gamma, lv.ln1_beta), l, deltas));
    const std::size_t base = l * kModulesPerBlock;
    const ag::Var hidden = ag::gelu(project(ag::layer_norm(x, lv.ln2_gamma, lv.ln2_beta), modules_[base + 4], deltas));
    x = ag::add(x, project(hidden, modules_[base + 5], deltas));
  }
  // CLS rows
  ag::Var cls;
  if (n == 1) {
    cls = ag::select_row(x, 0);
  } else {
    Tensor pick({n, n * t});
    for (std::size_t s = 0; s < n; ++s) pick[s * n * t + s * t] = 1;
    cls = ag::matmul(ag::Var::constant(std::move(pick)), x);
  }
  return ag::layer_norm(cls, final_gamma_, final_beta_);
}

Tensor Backbone::forward(const Tensor& image, const DeltaSet& deltas) const {
  check_deltas(deltas);
  return forward_tokens(patchify(image), as_constants(deltas)).value().reshaped({cfg_.hidden_dim});
}

Tensor Backbone::forward_scan(const std::vector<Tensor>& triplets, const DeltaSet& deltas) const {
  if (triplets.empty()) fail(ErrorKind::usage, "forward_scan: no slice triplets");
  check_deltas(deltas);
  const DeltaVars vars = as_constants(deltas);
  std::vector<Tensor> tokens;
  std::vector<const Tensor*> ptrs;
  tokens.reserve(triplets.size());
  for (const auto& t : triplets) ptrs.push_back(&tokens.emplace_back(patchify(t)));
  const Tensor feats = forward_batch(ptrs, vars).value();
  Tensor out({cfg_.hidden_dim});
  for (std::size_t s = 0; s < triplets.size(); ++s)
    for (std::size_t j = 0; j < cfg_.hidden_dim; ++j) out[j] += feats[s * cfg_.hidden_dim + j];
  for (auto& v : out.data()) v /= static_cast<real>(triplets.size());
  return out;
}

}  // namespace hl
