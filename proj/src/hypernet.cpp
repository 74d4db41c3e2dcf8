// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "hypernet.hpp"

#include <algorithm>
#include <cmath>

namespace hl {

void HyperConfig::validate(const std::vector<ModuleDescriptor>& modules) const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::usage, "hyperlora config: " + msg); };
  if (rank == 0) bad("rank must be at least 1");
  if (!std::isfinite(alpha)) bad("alpha must be finite");
  if (task_dim == 0 || pos_dim == 0 || latent == 0 || head_in == 0 || mlp_hidden == 0) bad("sizes must be positive");
  if (!(dropout >= 0 && dropout < 1)) bad("dropout must lie in [0, 1)");
  for (const auto& m : modules)
    if (rank > std::min(m.d_in, m.d_out))
      bad("rank " + std::to_string(rank) + " exceeds min(d_in, d_out) of module " + std::to_string(m.flat_index));
}

std::vector<ParamSpec> HyperNet::plan(const HyperConfig& cfg, const std::vector<ModuleDescriptor>& modules,
                                      std::size_t num_tasks) {
  std::vector<ParamSpec> out;
  auto dense = [&out](const std::string& prefix, std::size_t in, std::size_t o) {
    out.push_back({prefix + ".weight", {in, o}});
    out.push_back({prefix + ".bias", {o}});
  };
  auto norm = [&out](const std::string& prefix, std::size_t d) {
    out.push_back({prefix + ".gamma", {d}});
    out.push_back({prefix + ".beta", {d}});
  };
  out.push_back({"hyper.task_emb", {num_tasks, cfg.task_dim}});
  out.push_back({"hyper.pos_emb", {modules.size(), cfg.pos_dim}});
  const std::size_t in = cfg.task_dim + cfg.pos_dim;
  if (cfg.trunk == TrunkKind::residual) {
    dense("hyper.mixer.0", in, cfg.latent);
    dense("hyper.mixer.1", cfg.latent, cfg.latent);
    for (int b = 0; b < 2; ++b) {
      const std::string p = "hyper.blocks." + std::to_string(b);
      norm(p + ".ln", cfg.latent);
      dense(p + ".fc0", cfg.latent, cfg.latent);
      dense(p + ".fc1", cfg.latent, cfg.latent);
    }
    norm("hyper.out.ln", cfg.latent);
    dense("hyper.out.fc0", cfg.latent, cfg.head_in);
    dense("hyper.out.fc1", cfg.head_in, cfg.head_in);
  } else {
    dense("hyper.mlp.0", in, cfg.mlp_hidden);
    dense("hyper.mlp.1", cfg.mlp_hidden, cfg.mlp_hidden);
  }
  for (const auto& m : modules)
    dense("hyper.heads." + std::to_string(m.flat_index), cfg.head_input_size(), cfg.head_output_size(m));
  return out;
}

ParamCensus HyperNet::census(const std::vector<ParamSpec>& plan) {
  ParamCensus c;
  for (const auto& p : plan) {
    const std::uint64_t n = shape_product(p.shape);
    if (p.path == "hyper.task_emb") c.task_embeddings += n;
    else if (p.path == "hyper.pos_emb") c.positional += n;
    else if (p.path.rfind("hyper.heads.", 0) == 0) c.heads += n;
    else c.trunk += n;
  }
  return c;
}

ParamCensus HyperNet::closed_form(const HyperConfig& cfg, const std::vector<ModuleDescriptor>& modules,
                                  std::size_t num_tasks) {
  ParamCensus c;
  const std::uint64_t in = cfg.task_dim + cfg.pos_dim;
  c.task_embeddings = std::uint64_t(num_tasks) * cfg.task_dim;
  c.positional = std::uint64_t(modules.size()) * cfg.pos_dim;
  if (cfg.trunk == TrunkKind::residual) {
    const std::uint64_t l = cfg.latent, h = cfg.head_in;
    c.trunk = (in + 1) * l + (l + 1) * l  // mixer
              + 2 * (2 * l + 2 * (l + 1) * l)  // residual blocks
              + 2 * l + (l + 1) * h + (h + 1) * h;  // output projection
  } else {
    const std::uint64_t h = cfg.mlp_hidden;
    c.trunk = (in + 1) * h + (h + 1) * h;
  }
  const std::uint64_t hin = cfg.head_input_size();
  for (const auto& m : modules) c.heads += (hin + 1) * cfg.rank * (m.d_in + m.d_out);
  return c;
}

HyperNet::HyperNet(const HyperConfig& cfg, std::vector<ModuleDescriptor> modules, std::size_t num_tasks,
                   std::mt19937_64& rng)
    : cfg_(cfg), modules_(std::move(modules)), num_tasks_(num_tasks) {
  if (num_tasks == 0) fail(ErrorKind::usage, "hypernetwork needs at least one task");
  cfg_.validate(modules_);
  for (std::size_t i = 0; i < modules_.size(); ++i)
    if (modules_[i].flat_index != i) fail(ErrorKind::usage, "module descriptors must be in flat-index order");

  for (const auto& spec : plan(cfg_, modules_, num_tasks_)) {
    const auto& p = spec.path;
    const auto ends_with = [&p](const std::string& s) {
      return p.size() >= s.size() && p.compare(p.size() - s.size(), s.size(), s) == 0;
    };
    Tensor value;
    if (p == "hyper.task_emb") {
      value = normal(spec.shape, 1.0 / std::sqrt(double(cfg_.task_dim)), rng);
    } else if (p == "hyper.pos_emb") {
      value = normal(spec.shape, 1.0 / std::sqrt(double(cfg_.pos_dim)), rng);
    } else if (ends_with(".gamma")) {
      value = Tensor(spec.shape, real(1));
    } else if (ends_with(".beta")) {
      value = Tensor(spec.shape);
    } else if (p.rfind("hyper.heads.", 0) == 0) {
      value = Tensor(spec.shape);
      if (cfg_.head_init == HeadInit::lora && ends_with(".weight")) {
        const auto& m = modules_[std::stoul(p.substr(12))];
        const std::size_t hin = spec.shape[0], out = spec.shape[1], b_len = cfg_.rank * m.d_in;
        const double std = 2.0 / std::sqrt(double(hin) * double(m.d_in));
        std::normal_distribution<double> dist(0.0, std);
        for (std::size_t i = 0; i < hin; ++i)
          for (std::size_t j = 0; j < b_len; ++j) value[i * out + j] = static_cast<real>(dist(rng));
      }
    } else {
      // Linear layers: uniform in ±1/sqrt(fan_in) for weight and bias alike.
      const std::size_t fan_in = ends_with(".weight") ? spec.shape[0] : 0;
      const std::string weight_path = ends_with(".bias") ? p.substr(0, p.size() - 5) + ".weight" : p;
      const std::size_t fi = fan_in ? fan_in : params_.get(weight_path).value().shape()[0];
      value = uniform(spec.shape, 1.0 / std::sqrt(double(fi)), rng);
    }
    params_.add(p, std::move(value), true);
  }
}

Tensor HyperNet::task_embedding(std::size_t task) const {
  if (task >= num_tasks_) fail(ErrorKind::usage, "task index " + std::to_string(task) + " out of range");
  return ag::select_row(params_.get("hyper.task_emb"), task).value().reshaped({cfg_.task_dim});
}

ag::Var HyperNet::dense(const ag::Var& x, const std::string& prefix) const {
  return ag::linear(x, params_.get(prefix + ".weight"), params_.get(prefix + ".bias"));
}

ag::Var HyperNet::trunk(const ag::Var& x, std::mt19937_64* rng) const {
  const real p = static_cast<real>(cfg_.dropout);
  if (cfg_.trunk == TrunkKind::mlp) {
    ag::Var h = ag::dropout(ag::silu(dense(x, "hyper.mlp.0")), p, rng);
    return ag::dropout(ag::silu(dense(h, "hyper.mlp.1")), p, rng);
  }
  ag::Var h = ag::dropout(ag::silu(dense(x, "hyper.mixer.0")), p, rng);
  h = ag::dropout(ag::silu(dense(h, "hyper.mixer.1")), p, rng);
  for (int b = 0; b < 2; ++b) {
    const std::string pre = "hyper.blocks." + std::to_string(b);
    ag::Var r = ag::layer_norm(h, params_.get(pre + ".ln.gamma"), params_.get(pre + ".ln.beta"));
    r = ag::dropout(ag::silu(dense(r, pre + ".fc0")), p, rng);
    r = ag::dropout(ag::silu(dense(r, pre + ".fc1")), p, rng);
    h = ag::add(h, r);
  }
  ag::Var o = ag::layer_norm(h, params_.get("hyper.out.ln.gamma"), params_.get("hyper.out.ln.beta"));
  o = ag::silu(dense(o, "hyper.out.fc0"));
  return ag::silu(dense(o, "hyper.out.fc1"));
}

ag::Var HyperNet::head(const ag::Var& h_row, const ModuleDescriptor& m) const {
  return dense(h_row, "hyper.heads." + std::to_string(m.flat_index));
}

LoraFactors HyperNet::split(const Tensor& out, const ModuleDescriptor& m) const {
  const std::size_t r = cfg_.rank, nb = r * m.d_in;
  LoraFactors f;
  f.b = Tensor({m.d_in, r}, std::vector<real>(out.data().begin(), out.data().begin() + static_cast<std::ptrdiff_t>(nb)));
  f.a = Tensor({r, m.d_out}, std::vector<real>(out.data().begin() + static_cast<std::ptrdiff_t>(nb), out.data().end()));
  f.rank = r;
  f.alpha = static_cast<real>(cfg_.alpha);
  return f;
}

LoraVars HyperNet::split(const ag::Var& out, const ModuleDescriptor& m) const {
  const std::size_t r = cfg_.rank;
  return {ag::slice_flat(out, 0, {m.d_in, r}), ag::slice_flat(out, r * m.d_in, {r, m.d_out}),
          static_cast<real>(cfg_.alpha / static_cast<double>(r))};
}

LoraFactors HyperNet::generate(const Tensor& task_embedding, const ModuleDescriptor& m) const {
  if (m.flat_index >= modules_.size() || !(modules_[m.flat_index] == m))
    fail(ErrorKind::usage, "module index " + std::to_string(m.flat_index) + " out of range");
  if (task_embedding.size() != cfg_.task_dim) fail(ErrorKind::usage, "task embedding length mismatch");
  const ag::Var e = ag::Var::constant(task_embedding.reshaped({1, cfg_.task_dim}));
  const ag::Var pos = ag::select_row(params_.get("hyper.pos_emb"), m.flat_index);
  const ag::Var h = trunk(ag::concat_cols({e, pos}), nullptr);
  return split(head(h, m).value(), m);
}

DeltaSet HyperNet::generate_all(const Tensor& task_embedding) const {
  if (task_embedding.size() != cfg_.task_dim) fail(ErrorKind::usage, "task embedding length mismatch");
  DeltaSet out;
  if (modules_.empty()) return out;
  const ag::Var e = ag::Var::constant(task_embedding.reshaped({1, cfg_.task_dim}));
  const ag::Var h = trunk(ag::concat_cols({ag::repeat_rows(e, modules_.size()), params_.get("hyper.pos_emb")}), nullptr);
  for (const auto& m : modules_) out.emplace(m.flat_index, split(head(ag::select_row(h, m.flat_index), m).value(), m));
  return out;
}

DeltaSet HyperNet::generate_for_task(std::size_t task) const { return generate_all(task_embedding(task)); }

DeltaVars HyperNet::generate_graph(std::size_t task, std::mt19937_64* dropout_rng) const {
  if (task >= num_tasks_) fail(ErrorKind::usage, "task index " + std::to_string(task) + " out of range");
  DeltaVars out;
  if (modules_.empty()) return out;
  const ag::Var e = ag::select_row(params_.get("hyper.task_emb"), task);
  const ag::Var h =
      trunk(ag::concat_cols({ag::repeat_rows(e, modules_.size()), params_.get("hyper.pos_emb")}), dropout_rng);
  for (const auto& m : modules_) out.emplace(m.flat_index, split(head(ag::select_row(h, m.flat_index), m), m));
  return out;
}

std::uint64_t param_count_lora(std::uint64_t hidden, std::uint64_t dim, std::uint64_t rank) {
  return hidden * dim * 2 * rank;
}

std::uint64_t param_count_full(std::uint64_t hidden, std::uint64_t dim) { return hidden * dim * dim; }

}  // namespace hl
