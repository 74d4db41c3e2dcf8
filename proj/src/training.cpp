// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "parallel.hpp"

namespace hl {

using nlohmann::json;

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t which) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), which};
  return std::mt19937_64(seq);
}

Backbone make_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  auto rng = backbone_stream(seed);
  return Backbone(cfg, rng);
}

std::string head_path(std::size_t task, const char* what) {
  return "heads." + std::to_string(task) + "." + what;
}

}  // namespace

const char* to_string(Variant v) { return v == Variant::hyperct ? "hyperct" : "ew_baseline"; }

Variant variant_from_string(const std::string& s) {
  if (s == "hyperct") return Variant::hyperct;
  if (s == "ew_baseline") return Variant::ew_baseline;
  fail(ErrorKind::usage, "unknown model variant '" + s + "' (expected hyperct or ew_baseline)");
}

void TrainConfig::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) fail(ErrorKind::usage, "train.lr must be positive");
  if (!(lr_decay_factor > 0 && lr_decay_factor <= 1)) fail(ErrorKind::usage, "train.lr_decay_factor must lie in (0, 1]");
  if (lr_decay_every == 0) fail(ErrorKind::usage, "train.lr_decay_every must be positive");
  if (batch_size == 0) fail(ErrorKind::usage, "train.batch_size must be positive");
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) fail(ErrorKind::usage, "train.weight_decay must be >= 0");
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr * std::pow(cfg.lr_decay_factor, static_cast<double>(epoch / cfg.lr_decay_every));
}

std::size_t sample_task(std::span<const int> labels, std::mt19937_64& rng) {
  std::vector<std::size_t> available;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] != data::kMissing) available.push_back(k);
  if (available.empty()) fail(ErrorKind::data, "sample has no available task");
  std::uniform_int_distribution<std::size_t> pick(0, available.size() - 1);
  return available[pick(rng)];
}

std::mt19937_64 backbone_stream(std::uint64_t seed) { return stream(seed, 1); }
std::mt19937_64 hyper_stream(std::uint64_t seed) { return stream(seed, 2); }
std::mt19937_64 train_stream(std::uint64_t seed) { return stream(seed, 3); }

Model::Model(const BackboneConfig& backbone, const HyperConfig& hyper, Variant variant, std::size_t num_tasks,
             std::uint64_t seed)
    : backbone_cfg_(backbone),
      hyper_cfg_(hyper),
      variant_(variant),
      num_tasks_(num_tasks),
      backbone_(make_backbone(backbone, seed)) {
  if (num_tasks == 0) fail(ErrorKind::usage, "model needs at least one task");
  hyper_cfg_.validate(backbone_.modules());
  auto rng = hyper_stream(seed);
  if (variant_ == Variant::hyperct) {
    hyper_ = std::make_unique<HyperNet>(hyper_cfg_, backbone_.modules(), num_tasks_, rng);
    trainable_.merge(hyper_->params());
  } else {
    for (const auto& m : backbone_.modules()) {
      const std::string p = "ew." + std::to_string(m.flat_index);
      own_.add(p + ".b", normal({m.d_in, hyper_cfg_.rank}, 1.0 / std::sqrt(double(m.d_in)), rng), true);
      own_.add(p + ".a", Tensor({hyper_cfg_.rank, m.d_out}), true);
    }
  }
  const std::size_t d = backbone_cfg_.hidden_dim;
  for (std::size_t k = 0; k < num_tasks_; ++k) {
    own_.add(head_path(k, "weight"), Tensor({d, 1}), true);
    own_.add(head_path(k, "bias"), Tensor({1}), true);
  }
  trainable_.merge(own_);
}

DeltaVars Model::delta_graph(std::size_t task, std::mt19937_64* dropout_rng) const {
  if (task >= num_tasks_) fail(ErrorKind::usage, "task index " + std::to_string(task) + " out of range");
  if (hyper_) return hyper_->generate_graph(task, dropout_rng);
  DeltaVars out;
  const real s = static_cast<real>(hyper_cfg_.alpha / static_cast<double>(hyper_cfg_.rank));
  for (const auto& m : backbone_.modules()) {
    const std::string p = "ew." + std::to_string(m.flat_index);
    out.emplace(m.flat_index, LoraVars{own_.get(p + ".b"), own_.get(p + ".a"), s});
  }
  return out;
}

DeltaSet Model::deltas(std::size_t task) const {
  if (task >= num_tasks_) fail(ErrorKind::usage, "task index " + std::to_string(task) + " out of range");
  if (hyper_) return hyper_->generate_for_task(task);
  DeltaSet out;
  for (const auto& m : backbone_.modules()) {
    const std::string p = "ew." + std::to_string(m.flat_index);
    out.emplace(m.flat_index, LoraFactors{own_.get(p + ".b").value(), own_.get(p + ".a").value(), hyper_cfg_.rank,
                                          static_cast<real>(hyper_cfg_.alpha)});
  }
  return out;
}

ag::Var Model::logit_graph(const std::vector<Tensor>& tokens, std::size_t task, const DeltaVars& deltas) const {
  return logits_graph({&tokens}, task, deltas);
}

ag::Var Model::logits_graph(const std::vector<const std::vector<Tensor>*>& samples, std::size_t task,
                            const DeltaVars& deltas) const {
  if (samples.empty()) fail(ErrorKind::usage, "logits_graph: no samples");
  std::vector<const Tensor*> tokens;
  for (const auto* s : samples) {
    if (s->empty()) fail(ErrorKind::data, "sample has no slice triplets");
    for (const auto& t : *s) tokens.push_back(&t);
  }
  ag::Var feats = backbone_.forward_batch(tokens, deltas);
  if (tokens.size() != samples.size()) {
    // per-sample mean over triplets
    Tensor avg({samples.size(), tokens.size()});
    std::size_t col = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (std::size_t j = 0; j < samples[i]->size(); ++j)
        avg[i * tokens.size() + col++] = static_cast<real>(1.0 / static_cast<double>(samples[i]->size()));
    feats = ag::matmul(ag::Var::constant(std::move(avg)), feats);
  }
  return ag::linear(feats, own_.get(head_path(task, "weight")), own_.get(head_path(task, "bias")));
}

double Model::logit(const std::vector<Tensor>& tokens, std::size_t task, const DeltaSet& deltas) const {
  return logit_graph(tokens, task, as_constants(deltas)).value()[0];
}

std::vector<Tensor> Model::tokenize(const data::Volume& v) const {
  std::vector<Tensor> out;
  for (const auto& t : data::slice_triplets(v)) out.push_back(backbone_.patchify(t));
  return out;
}

std::map<std::string, Tensor> Model::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& [path, e] : trainable_.entries()) out.emplace(path, e.var.value());
  return out;
}

void Model::restore(const std::map<std::string, Tensor>& tensors) {
  for (const auto& [path, t] : tensors)
    if (!trainable_.contains(path)) fail(ErrorKind::data, "checkpoint/config mismatch: unexpected tensor '" + path + "'");
  for (const auto& [path, e] : trainable_.entries()) {
    const auto it = tensors.find(path);
    if (it == tensors.end()) fail(ErrorKind::data, "checkpoint/config mismatch: missing tensor '" + path + "'");
    if (it->second.shape() != e.var.value().shape())
      fail(ErrorKind::data, "checkpoint/config mismatch: '" + path + "' has shape " + shape_str(it->second.shape()) +
                                ", expected " + shape_str(e.var.value().shape()));
    ag::Var v = e.var;
    v.mutable_value() = it->second;
  }
}

ag::Var batch_loss(const Model& model, const std::vector<BatchItem>& items, std::mt19937_64* dropout_rng) {
  if (items.empty()) fail(ErrorKind::usage, "empty batch");
  // Tasks in order of first appearance; one factor draw per task.
  std::vector<std::size_t> order;
  std::map<std::size_t, DeltaVars> deltas;
  for (const auto& it : items)
    if (!deltas.count(it.task)) {
      order.push_back(it.task);
      deltas.emplace(it.task, model.delta_graph(it.task, dropout_rng));
    }
  ag::Var total;
  for (std::size_t k : order) {
    std::vector<const std::vector<Tensor>*> group;
    std::vector<int> labels;
    for (const auto& it : items) {
      if (it.task != k) continue;
      const int y = it.sample->labels.at(k);
      if (y == data::kMissing) fail(ErrorKind::data, "sample " + it.sample->id + " has no label for its task");
      group.push_back(&it.sample->tokens);
      labels.push_back(y);
    }
    const ag::Var part = ag::bce_sum(model.logits_graph(group, k, deltas.at(k)), labels);
    total = total.valid() ? ag::add(total, part) : part;
  }
  return ag::scale(total, static_cast<real>(1.0 / static_cast<double>(items.size())));
}

BatchResult loss_for_batch(const std::vector<const Sample*>& batch, Model& model, std::mt19937_64& rng) {
  if (batch.empty()) fail(ErrorKind::usage, "empty batch");
  std::vector<BatchItem> items;
  BatchResult out;
  for (const Sample* s : batch) {
    const std::size_t k = sample_task(s->labels, rng);
    items.push_back({s, k});
    out.tasks.push_back(k);
  }
  model.trainable().zero_grads();
  const ag::Var loss = batch_loss(model, items, &rng);
  out.loss = loss.value()[0];
  if (!std::isfinite(out.loss)) fail(ErrorKind::numeric, "non-finite training loss");
  ag::backward(loss);
  out.grads = model.trainable().gradients();
  for (const auto& [path, g] : out.grads)
    if (!g.all_finite()) fail(ErrorKind::numeric, "non-finite gradient for " + path);
  return out;
}

void optimizer_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr, double weight_decay) {
  for (const auto& [path, g] : grads) {
    if (!params.contains(path)) fail(ErrorKind::usage, "gradient for unknown parameter " + path);
    const auto& e = params.entries().at(path);
    if (!e.trainable) fail(ErrorKind::usage, "gradient for frozen parameter " + path);
    if (g.shape() != e.var.value().shape()) fail(ErrorKind::usage, "gradient shape mismatch for " + path);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (const auto& [path, g] : grads) {
    ag::Var var = params.entries().at(path).var;
    Tensor& p = var.mutable_value();
    auto& m = state.m[path];
    auto& v = state.v[path];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      m[i] = kAdamBeta1 * m[i] + (1 - kAdamBeta1) * gi;
      v[i] = kAdamBeta2 * v[i] + (1 - kAdamBeta2) * gi * gi;
      double x = static_cast<double>(p[i]) * (1.0 - lr * weight_decay);
      x -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
      p[i] = static_cast<real>(x);
    }
    if (!p.all_finite()) fail(ErrorKind::numeric, "non-finite parameter after update: " + path);
  }
}

std::vector<eval::ScoreRecord> score_samples(const Model& model, const std::vector<Sample>& samples,
                                             unsigned threads) {
  constexpr std::size_t kChunk = 32;
  const std::size_t num_tasks = model.num_tasks();
  struct Job {
    std::size_t task;
    std::vector<std::size_t> idx;
  };
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < num_tasks; ++k) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].labels[k] == data::kMissing) continue;
      idx.push_back(i);
      if (idx.size() == kChunk) jobs.push_back({k, std::exchange(idx, {})});
    }
    if (!idx.empty()) jobs.push_back({k, std::move(idx)});
  }
  std::vector<DeltaSet> deltas;
  for (std::size_t k = 0; k < num_tasks; ++k) deltas.push_back(model.deltas(k));
  std::vector<double> logits(samples.size() * num_tasks);
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    std::vector<const std::vector<Tensor>*> group;
    for (std::size_t i : job.idx) group.push_back(&samples[i].tokens);
    const Tensor z = model.logits_graph(group, job.task, as_constants(deltas[job.task])).value();
    for (std::size_t n = 0; n < job.idx.size(); ++n) logits[job.idx[n] * num_tasks + job.task] = z[n];
  });
  std::vector<eval::ScoreRecord> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    for (std::size_t k = 0; k < num_tasks; ++k) {
      if (s.labels[k] == data::kMissing) continue;
      const double z = logits[i * num_tasks + k];
      if (!std::isfinite(z)) fail(ErrorKind::numeric, "non-finite logit for sample " + s.id);
      out.push_back({s.id, k, 1.0 / (1.0 + std::exp(-z)), s.labels[k]});
    }
  }
  return out;
}

std::pair<std::vector<std::optional<double>>, std::optional<double>> task_aucs(
    const std::vector<eval::ScoreRecord>& scores, std::size_t num_tasks) {
  std::vector<std::optional<double>> per_task(num_tasks);
  const auto grouped = eval::group_by_task(scores);
  double sum = 0;
  std::size_t defined = 0;
  for (const auto& [k, ts] : grouped) {
    if (k >= num_tasks) continue;
    const auto pos = std::count(ts.labels.begin(), ts.labels.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(ts.labels.size())) continue;
    per_task[k] = eval::roc_auc(ts.scores, ts.labels);
    sum += *per_task[k];
    ++defined;
  }
  std::optional<double> mean;
  if (defined) mean = sum / static_cast<double>(defined);
  return {per_task, mean};
}

std::string to_jsonl(const EpochLog& e) {
  json per_task = json::array();
  for (const auto& a : e.val_auc) per_task.push_back(a ? json(*a) : json(nullptr));
  const json j{{"epoch", e.epoch},
               {"lr", e.lr},
               {"train_loss", e.train_loss},
               {"val_auc_per_task", per_task},
               {"val_auc_mean", e.val_auc_mean ? json(*e.val_auc_mean) : json(nullptr)}};
  return j.dump() + "\n";
}

TrainResult train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& cfg, std::uint64_t seed, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) fail(ErrorKind::data, "training split is empty");
  if (val_set.empty()) fail(ErrorKind::data, "validation split is empty");
  const unsigned threads = configured_threads();
  auto rng = train_stream(seed);
  auto rng_text = [&rng] {
    std::ostringstream os;
    os << rng;
    return os.str();
  };

  TrainResult result;
  result.best = model.snapshot();
  result.best_rng_state = rng_text();
  double best_auc = -std::numeric_limits<double>::infinity();
  if (cfg.epochs > 0) {
    const auto init = task_aucs(score_samples(model, val_set, threads), model.num_tasks()).second;
    if (init) best_auc = *init;
  }

  // Samples with every label missing carry no loss.
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train_set.size(); ++i)
    if (std::any_of(train_set[i].labels.begin(), train_set[i].labels.end(), [](int y) { return y != data::kMissing; }))
      usable.push_back(i);
  if (usable.empty()) fail(ErrorKind::data, "no training sample has a label");

  AdamState adam;
  std::vector<std::size_t> order;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    order = usable;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const Sample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(&train_set[order[i]]);
      const auto step = loss_for_batch(batch, model, rng);
      optimizer_step(model.trainable(), step.grads, adam, lr, cfg.weight_decay);
      loss_sum += step.loss;
      ++batches;
    }
    model.trainable().zero_grads();

    EpochLog log;
    log.epoch = epoch + 1;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(batches);
    std::tie(log.val_auc, log.val_auc_mean) = task_aucs(score_samples(model, val_set, threads), model.num_tasks());
    if (log.val_auc_mean && *log.val_auc_mean > best_auc) {
      best_auc = *log.val_auc_mean;
      result.best = model.snapshot();
      result.best_epoch = log.epoch;
      result.best_rng_state = rng_text();
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

DataIndex read_data_index(const std::filesystem::path& dir, std::size_t num_tasks) {
  DataIndex index;
  index.manifest = data::read_manifest(dir / "manifest.jsonl", num_tasks);
  index.splits = data::read_splits(dir / "splits.json");
  return index;
}

std::vector<Sample> load_samples(const Model& model, const std::filesystem::path& dir, const DataIndex& index,
                                 const std::vector<std::string>& ids, unsigned threads) {
  std::unordered_map<std::string, const data::ManifestRecord*> by_id;
  for (const auto& r : index.manifest) by_id.emplace(r.id, &r);
  const std::size_t side = model.backbone().config().image_side;
  std::vector<Sample> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = by_id.find(ids[i]);
    if (it == by_id.end()) fail(ErrorKind::data, "split lists unknown sample '" + ids[i] + "'");
    out[i].id = ids[i];
    out[i].labels = it->second->labels;
  }
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const auto v = data::load_volume(dir / "volumes" / (ids[i] + ".hctv"));
    if (v.height != side || v.width != side)
      fail(ErrorKind::data, "volume " + ids[i] + " is " + std::to_string(v.height) + "x" + std::to_string(v.width) +
                                ", backbone expects " + std::to_string(side) + "x" + std::to_string(side));
    out[i].tokens = model.tokenize(v);
  });
  return out;
}

}  // namespace hl
