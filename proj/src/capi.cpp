// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "hyperlora/hyperlora.h"

#include <cmath>
#include <cstring>
#include <new>
#include <string>

#include "commands.hpp"

struct hl_config {
  hl::RunConfig value;
};

struct hl_model {
  hl::LoadedModel value;
};

namespace {

thread_local std::string last_error;

template <typename Fn>
hl_status guard(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return HL_OK;
  } catch (const hl::Error& e) {
    last_error = e.what();
    return static_cast<hl_status>(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return HL_ERR_DATA;
  } catch (const std::exception& e) {
    last_error = e.what();
    return HL_ERR_DATA;
  }
}

void require(const void* p, const char* what) {
  if (!p) hl::fail(hl::ErrorKind::usage, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* hl_version(void) { return "0.1.0"; }

const char* hl_last_error(void) { return last_error.c_str(); }

hl_status hl_config_parse(const char* json_text, hl_config** out) {
  return guard([&] {
    require(json_text, "json_text");
    require(out, "out");
    *out = new hl_config{hl::parse_run_config_text(json_text)};
  });
}

hl_status hl_config_load(const char* path, hl_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new hl_config{hl::load_run_config(path)};
  });
}

void hl_config_free(hl_config* config) { delete config; }

hl_status hl_config_effective_json(const hl_config* config, char** out) {
  return guard([&] {
    require(config, "config");
    require(out, "out");
    *out = dup(hl::effective_config_text(config->value));
  });
}

void hl_string_free(char* s) { delete[] s; }

hl_status hl_gen_data(const hl_config* config, const char* out_dir) {
  return guard([&] {
    require(config, "config");
    require(out_dir, "out_dir");
    hl::cmd_gen_data(config->value, out_dir);
  });
}

hl_status hl_train(const hl_config* config, const char* data_dir, const char* out_dir, hl_progress_fn progress,
                   void* user) {
  return guard([&] {
    require(config, "config");
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    hl::ProgressFn fn;
    if (progress) fn = [progress, user](const std::string& line) { progress(line.c_str(), user); };
    hl::cmd_train(config->value, data_dir, out_dir, fn);
  });
}

void hl_eval_options_init(hl_eval_options* opts) {
  if (!opts) return;
  *opts = hl_eval_options{};
  opts->bootstrap_iters = -1;
}

hl_status hl_eval(const hl_eval_options* opts, const char* out_dir) {
  return guard([&] {
    require(opts, "opts");
    require(out_dir, "out_dir");
    hl::EvalOptions o;
    if (opts->checkpoint) o.checkpoint = opts->checkpoint;
    if (opts->data_dir) o.data_dir = opts->data_dir;
    if (opts->scores_path) o.scores = opts->scores_path;
    if (opts->split) o.split = opts->split;
    if (opts->bootstrap_iters >= 0) o.bootstrap_iters = static_cast<std::size_t>(opts->bootstrap_iters);
    if (opts->has_seed) o.seed = opts->seed;
    hl::cmd_eval(o, out_dir);
  });
}

hl_status hl_dca(const char* scores_path, const char* out_dir, double t_lo, double t_hi, size_t steps) {
  return guard([&] {
    require(scores_path, "scores_path");
    require(out_dir, "out_dir");
    hl::cmd_dca(scores_path, out_dir, t_lo, t_hi, steps);
  });
}

hl_status hl_analyze(const char* checkpoint, const char* out_dir, const char* mode) {
  return guard([&] {
    require(checkpoint, "checkpoint");
    require(out_dir, "out_dir");
    std::optional<hl::analysis::FlattenMode> m;
    if (mode) m = hl::analysis::flatten_mode_from_string(mode);
    hl::cmd_analyze(checkpoint, out_dir, m);
  });
}

hl_status hl_param_audit(const hl_config* config, const char* out_dir, char** report) {
  return guard([&] {
    require(config, "config");
    std::optional<hl::fs::path> dir;
    if (out_dir) dir = out_dir;
    const std::string text = hl::cmd_param_audit(config->value, dir);
    if (report) *report = dup(text);
  });
}

hl_status hl_model_load(const char* checkpoint, hl_model** out) {
  return guard([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    *out = new hl_model{hl::load_model(checkpoint)};
  });
}

void hl_model_free(hl_model* model) { delete model; }

size_t hl_model_num_tasks(const hl_model* model) { return model ? model->value.model->num_tasks() : 0; }

hl_status hl_model_predict_volume(const hl_model* model, const char* volume_path, size_t task, double* probability) {
  return guard([&] {
    require(model, "model");
    require(volume_path, "volume_path");
    require(probability, "probability");
    const hl::Model& m = *model->value.model;
    const auto volume = hl::data::load_volume(volume_path);
    const std::size_t side = m.backbone().config().image_side;
    if (volume.height != side || volume.width != side)
      hl::fail(hl::ErrorKind::data, "volume does not match the backbone input size");
    const double z = m.logit(m.tokenize(volume), task, m.deltas(task));
    if (!std::isfinite(z)) hl::fail(hl::ErrorKind::numeric, "non-finite logit");
    *probability = 1.0 / (1.0 + std::exp(-z));
  });
}

}  // extern "C"
