// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "training.hpp"

GradCheckResult run_training_gradient_check(std::uint64_t seed, std::size_t coords) {
  using namespace hl;
  BackboneConfig bb;
  bb.hidden_dim = 16;
  bb.num_layers = 2;
  bb.num_heads = 2;
  bb.patch_size = 4;
  bb.image_side = 8;
  HyperConfig hc;
  hc.rank = 2;
  hc.alpha = 2;
  hc.task_dim = 8;
  hc.pos_dim = 4;
  hc.latent = 8;
  hc.head_in = 8;
  hc.dropout = 0;
  Model model(bb, hc, Variant::hyperct, 3, seed);

  // Move away from the zero-initialised heads so every group has gradient.
  std::mt19937_64 rng(seed * 7919 + 1);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (const auto& [path, e] : model.trainable().entries()) {
    if (path.rfind("heads.", 0) != 0 && path.rfind("hyper.heads.", 0) != 0) continue;
    ag::Var v = e.var;
    for (auto& x : v.mutable_value().data()) x += static_cast<real>(noise(rng));
  }

  data::SyntheticSpec spec;
  spec.n_samples = 6;
  spec.families = {{"a", data::SignalKind::blob, 2}, {"b", data::SignalKind::texture, 1}};
  spec.height = spec.width = 8;
  spec.depth = 6;
  spec.missing_rate = {0.0};
  spec.seed = seed;
  const auto ds = data::generate_dataset(spec);
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < ds.volumes.size(); ++i)
    samples.push_back({ds.manifest[i].id, ds.manifest[i].labels, model.tokenize(ds.volumes[i])});
  std::vector<BatchItem> items;
  for (const auto& s : samples) items.push_back({&s, sample_task(s.labels, rng)});

  model.trainable().zero_grads();
  ag::backward(batch_loss(model, items, nullptr));
  const GradMap grads = model.trainable().gradients();

  const std::vector<std::vector<std::string>> groups = [&] {
    std::vector<std::vector<std::string>> g(4);
    for (const auto& [path, e] : model.trainable().entries()) {
      if (path == "hyper.task_emb") g[0].push_back(path);
      else if (path == "hyper.pos_emb") g[1].push_back(path);
      else if (path.rfind("hyper.heads.", 0) == 0) g[2].push_back(path);
      else if (path.rfind("heads.", 0) == 0) g[3].push_back(path);
    }
    return g;
  }();

  const double h = 1e-3;
  GradCheckResult out;
  for (std::size_t c = 0; c < coords; ++c) {
    const auto& group = groups[c % groups.size()];
    const std::string& path = group[std::uniform_int_distribution<std::size_t>(0, group.size() - 1)(rng)];
    ag::Var var = model.trainable().get(path);
    const std::size_t n = var.value().size();
    GradCheckCoord gc;
    gc.path = path;
    gc.index = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const auto it = grads.find(path);
    gc.analytic = it == grads.end() ? 0.0 : static_cast<double>(it->second[gc.index]);

    const real saved = var.value()[gc.index];
    var.mutable_value()[gc.index] = saved + h;
    const double up = batch_loss(model, items, nullptr).value()[0];
    var.mutable_value()[gc.index] = saved - h;
    const double down = batch_loss(model, items, nullptr).value()[0];
    var.mutable_value()[gc.index] = saved;
    gc.numeric = (up - down) / (2 * h);

    if (std::abs(gc.analytic) >= 1e-6) {
      gc.checked = true;
      gc.rel_error = std::abs(gc.analytic - gc.numeric) / std::max(std::abs(gc.analytic), std::abs(gc.numeric));
      out.max_rel_error = std::max(out.max_rel_error, gc.rel_error);
      ++out.checked;
    }
    out.coords.push_back(gc);
  }
  return out;
}
