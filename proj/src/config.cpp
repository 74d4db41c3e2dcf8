// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace hl {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& msg) {
  fail(ErrorKind::usage, "config key '" + key + "': " + msg);
}

/// Reads fields out of one JSON object and remembers which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) bad(prefix_.empty() ? "<root>" : prefix_, "must be an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) bad(name(key), "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const std::string& key, std::uint64_t& out, bool required) {
    const json* v = find(key);
    if (!v) {
      if (required) bad(name(key), "is required");
      return;
    }
    if (!v->is_number_unsigned()) bad(name(key), "expected a non-negative integer");
    out = v->get<std::uint64_t>();
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) bad(name(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) bad(name(key), "must be finite");
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) bad(name(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  /// A number or an array of numbers.
  void get(const std::string& key, std::vector<double>& out) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_number()) {
      out = {v->get<double>()};
      return;
    }
    if (!v->is_array() || v->empty()) bad(name(key), "expected a number or a non-empty array of numbers");
    out.clear();
    for (const auto& x : *v) {
      if (!x.is_number()) bad(name(key), "expected numbers");
      out.push_back(x.get<double>());
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) bad(name(key), "unknown key");
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void read_data(const json& j, data::SyntheticSpec& d) {
  Section s(j, "data");
  s.get("n_samples", d.n_samples);
  if (const json* fam = s.find("families")) {
    if (!fam->is_array() || fam->empty()) bad("data.families", "expected a non-empty array");
    d.families.clear();
    for (std::size_t i = 0; i < fam->size(); ++i) {
      Section f((*fam)[i], "data.families[" + std::to_string(i) + "]");
      data::FamilySpec spec;
      spec.name = "family" + std::to_string(i);
      std::string signal = "blob";
      f.get("name", spec.name);
      f.get("signal", signal);
      f.get("tasks", spec.tasks);
      f.finish();
      try {
        spec.signal = data::signal_kind_from_string(signal);
      } catch (const Error& e) {
        bad(f.name("signal"), e.what());
      }
      d.families.push_back(spec);
    }
  }
  s.get("prevalence", d.prevalence);
  s.get("missing_rate", d.missing_rate);
  s.get("rho", d.rho);
  s.get("noise_sigma", d.noise_sigma);
  s.get("blob_amplitude", d.blob_amplitude);
  s.get("texture_amplitude", d.texture_amplitude);
  s.get("height", d.height);
  s.get("width", d.width);
  s.get("depth", d.depth);
  s.get("val_fraction", d.val_fraction);
  s.get("test_fraction", d.test_fraction);
  s.finish();
}

void read_backbone(const json& j, BackboneConfig& b) {
  Section s(j, "backbone");
  s.get("hidden_dim", b.hidden_dim);
  s.get("num_layers", b.num_layers);
  s.get("num_heads", b.num_heads);
  s.get("patch_size", b.patch_size);
  s.get("mlp_ratio", b.mlp_ratio);
  s.get("image_side", b.image_side);
  s.get("init_std", b.init_std);
  s.finish();
}

void read_hyper(const json& j, HyperConfig& h) {
  Section s(j, "hyperlora");
  s.get("rank", h.rank);
  s.get("alpha", h.alpha);
  s.get("task_dim", h.task_dim);
  s.get("pos_dim", h.pos_dim);
  s.get("latent", h.latent);
  s.get("head_in", h.head_in);
  s.get("dropout", h.dropout);
  s.get("mlp_hidden", h.mlp_hidden);
  std::string trunk = h.trunk == TrunkKind::residual ? "residual" : "mlp";
  std::string init = h.head_init == HeadInit::lora ? "lora" : "zero";
  s.get("trunk", trunk);
  s.get("head_init", init);
  s.finish();
  if (trunk == "residual") h.trunk = TrunkKind::residual;
  else if (trunk == "mlp") h.trunk = TrunkKind::mlp;
  else bad("hyperlora.trunk", "expected residual or mlp");
  if (init == "lora") h.head_init = HeadInit::lora;
  else if (init == "zero") h.head_init = HeadInit::zero;
  else bad("hyperlora.head_init", "expected lora or zero");
}

void read_train(const json& j, TrainConfig& t) {
  Section s(j, "train");
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("lr", t.lr);
  s.get("weight_decay", t.weight_decay);
  s.get("lr_decay_factor", t.lr_decay_factor);
  s.get("lr_decay_every", t.lr_decay_every);
  std::string variant = to_string(t.variant);
  s.get("variant", variant);
  s.finish();
  try {
    t.variant = variant_from_string(variant);
  } catch (const Error& e) {
    bad("train.variant", e.what());
  }
}

void read_eval(const json& j, EvalConfig& e) {
  Section s(j, "eval");
  s.get("split", e.split);
  s.get("bootstrap_iters", e.bootstrap_iters);
  s.get("dca_t_lo", e.dca_t_lo);
  s.get("dca_t_hi", e.dca_t_hi);
  s.get("dca_steps", e.dca_steps);
  s.finish();
}

void read_analysis(const json& j, AnalysisConfig& a) {
  Section s(j, "analysis");
  std::string mode = analysis::to_string(a.mode);
  s.get("mode", mode);
  s.get("k_min", a.k_min);
  s.get("k_max", a.k_max);
  s.finish();
  try {
    a.mode = analysis::flatten_mode_from_string(mode);
  } catch (const Error& e) {
    bad("analysis.mode", e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  data.validate();
  backbone.validate();
  hyper.validate(enumerate_target_modules(backbone));
  train.validate();
  if (backbone.image_side != data.height || backbone.image_side != data.width)
    fail(ErrorKind::usage, "backbone.image_side must equal data.height and data.width");
  if (eval.split != "train" && eval.split != "val" && eval.split != "test")
    fail(ErrorKind::usage, "eval.split must be train, val or test");
  if (!(eval.dca_t_lo > 0 && eval.dca_t_hi < 1 && eval.dca_t_lo < eval.dca_t_hi))
    fail(ErrorKind::usage, "eval DCA range must satisfy 0 < dca_t_lo < dca_t_hi < 1");
  if (eval.dca_steps < 2) fail(ErrorKind::usage, "eval.dca_steps must be at least 2");
  if (analysis.k_min < 2 || analysis.k_min > analysis.k_max)
    fail(ErrorKind::usage, "analysis k range must satisfy 2 <= k_min <= k_max");
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed, true);
  if (const json* v = root.find("data")) read_data(*v, c.data);
  if (const json* v = root.find("backbone")) read_backbone(*v, c.backbone);
  if (const json* v = root.find("hyperlora")) read_hyper(*v, c.hyper);
  if (const json* v = root.find("train")) read_train(*v, c.train);
  if (const json* v = root.find("eval")) read_eval(*v, c.eval);
  if (const json* v = root.find("analysis")) read_analysis(*v, c.analysis);
  root.finish();
  c.data.seed = c.seed;
  c.validate();
  return c;
}

RunConfig parse_run_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::usage, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::usage, "cannot open config " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return parse_run_config_text(os.str());
}

json to_json(const RunConfig& c) {
  json families = json::array();
  for (const auto& f : c.data.families)
    families.push_back({{"name", f.name}, {"signal", data::to_string(f.signal)}, {"tasks", f.tasks}});
  return {
      {"seed", c.seed},
      {"data",
       {{"n_samples", c.data.n_samples},
        {"families", families},
        {"prevalence", c.data.prevalence},
        {"missing_rate", c.data.missing_rate},
        {"rho", c.data.rho},
        {"noise_sigma", c.data.noise_sigma},
        {"blob_amplitude", c.data.blob_amplitude},
        {"texture_amplitude", c.data.texture_amplitude},
        {"height", c.data.height},
        {"width", c.data.width},
        {"depth", c.data.depth},
        {"val_fraction", c.data.val_fraction},
        {"test_fraction", c.data.test_fraction}}},
      {"backbone",
       {{"hidden_dim", c.backbone.hidden_dim},
        {"num_layers", c.backbone.num_layers},
        {"num_heads", c.backbone.num_heads},
        {"patch_size", c.backbone.patch_size},
        {"mlp_ratio", c.backbone.mlp_ratio},
        {"image_side", c.backbone.image_side},
        {"init_std", c.backbone.init_std}}},
      {"hyperlora",
       {{"rank", c.hyper.rank},
        {"alpha", c.hyper.alpha},
        {"task_dim", c.hyper.task_dim},
        {"pos_dim", c.hyper.pos_dim},
        {"latent", c.hyper.latent},
        {"head_in", c.hyper.head_in},
        {"dropout", c.hyper.dropout},
        {"trunk", c.hyper.trunk == TrunkKind::residual ? "residual" : "mlp"},
        {"mlp_hidden", c.hyper.mlp_hidden},
        {"head_init", c.hyper.head_init == HeadInit::lora ? "lora" : "zero"}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay},
        {"lr_decay_factor", c.train.lr_decay_factor},
        {"lr_decay_every", c.train.lr_decay_every},
        {"variant", to_string(c.train.variant)}}},
      {"eval",
       {{"split", c.eval.split},
        {"bootstrap_iters", c.eval.bootstrap_iters},
        {"dca_t_lo", c.eval.dca_t_lo},
        {"dca_t_hi", c.eval.dca_t_hi},
        {"dca_steps", c.eval.dca_steps}}},
      {"analysis",
       {{"mode", analysis::to_string(c.analysis.mode)}, {"k_min", c.analysis.k_min}, {"k_max", c.analysis.k_max}}},
  };
}

std::string effective_config_text(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

RunConfig reference_config() {
  RunConfig c;
  c.data.families = {{"conventional", data::SignalKind::texture, 13}, {"opportunistic", data::SignalKind::blob, 12}};
  c.data.height = c.data.width = 144;
  c.data.depth = 165;
  c.backbone.hidden_dim = 768;
  c.backbone.num_layers = 12;
  c.backbone.num_heads = 12;
  c.backbone.patch_size = 16;
  c.backbone.image_side = 144;
  c.hyper.rank = 16;
  c.hyper.alpha = 16;
  c.hyper.task_dim = 512;
  c.hyper.pos_dim = 64;
  c.hyper.latent = 128;
  c.hyper.head_in = 512;
  c.hyper.mlp_hidden = 64;
  c.train.lr = 1e-5;
  c.train.epochs = 20;
  return c;
}

}  // namespace hl
