// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_set>

#include "parallel.hpp"

namespace hl {

using nlohmann::json;

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::data, "cannot create output directory " + dir.string());
}

void echo_config(const fs::path& out_dir, const RunConfig& cfg) {
  write_text(out_dir / "config.json", effective_config_text(cfg));
}

const std::vector<std::string>& split_ids(const data::Splits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  fail(ErrorKind::usage, "unknown split '" + name + "' (expected train, val or test)");
}

std::string coords_csv(const analysis::Coords& c) {
  std::string out = "task_id,x,y\n";
  for (std::size_t i = 0; i < c.size(); ++i)
    out += std::to_string(i) + "," + eval::format_real(c[i][0]) + "," + eval::format_real(c[i][1]) + "\n";
  return out;
}

json census_json(const ParamCensus& c) {
  return {{"task_embeddings", c.task_embeddings},
          {"positional", c.positional},
          {"trunk", c.trunk},
          {"heads", c.heads},
          {"total", c.total()}};
}

json audit_one(const RunConfig& cfg) {
  const auto modules = enumerate_target_modules(cfg.backbone);
  const auto actual = HyperNet::census(HyperNet::plan(cfg.hyper, modules, cfg.num_tasks()));
  const auto closed = HyperNet::closed_form(cfg.hyper, modules, cfg.num_tasks());
  const std::uint64_t d_h = cfg.hyper.head_input_size(), d = cfg.backbone.hidden_dim, r = cfg.hyper.rank;
  return {{"hidden_dim", d},
          {"num_layers", cfg.backbone.num_layers},
          {"modules", modules.size()},
          {"rank", r},
          {"tasks", cfg.num_tasks()},
          {"census", census_json(actual)},
          {"closed_form", census_json(closed)},
          {"match", actual == closed},
          {"square_head_cost",
           {{"d_h", d_h}, {"lora", param_count_lora(d_h, d, r)}, {"full", param_count_full(d_h, d)}}}};
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  make_dir(out_dir);
  data::write_dataset(out_dir, data::generate_dataset(cfg.data));
  echo_config(out_dir, cfg);
}

void cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir, const ProgressFn& progress) {
  cfg.validate();
  const auto index = read_data_index(data_dir, cfg.num_tasks());
  Model model(cfg.backbone, cfg.hyper, cfg.train.variant, cfg.num_tasks(), cfg.seed);
  const unsigned threads = configured_threads();
  const auto train_set = load_samples(model, data_dir, index, index.splits.train, threads);
  const auto val_set = load_samples(model, data_dir, index, index.splits.val, threads);
  make_dir(out_dir);
  echo_config(out_dir, cfg);

  std::string metrics;
  const auto result = train(model, train_set, val_set, cfg.train, cfg.seed, [&](const EpochLog& e) {
    metrics += to_jsonl(e);
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %zu lr %.3g loss %.4f val_auc_mean %s", e.epoch, e.lr, e.train_loss,
                    e.val_auc_mean ? eval::format_real(*e.val_auc_mean).c_str() : "n/a");
      progress(buf);
    }
  });
  write_text(out_dir / "metrics.jsonl", metrics);
  save_checkpoint(out_dir / "checkpoint.bin", Checkpoint{to_json(cfg), result.best_epoch, result.best_rng_state, result.best});
}

LoadedModel load_model(const fs::path& checkpoint) {
  LoadedModel out;
  out.checkpoint = load_checkpoint(checkpoint);
  try {
    out.config = parse_run_config(out.checkpoint.config);
  } catch (const Error& e) {
    fail(ErrorKind::data, "checkpoint carries an invalid config: " + std::string(e.what()));
  }
  const auto& c = out.config;
  out.model = std::make_unique<Model>(c.backbone, c.hyper, c.train.variant, c.num_tasks(), c.seed);
  out.model->restore(out.checkpoint.tensors);
  return out;
}

void cmd_eval(const EvalOptions& opts, const fs::path& out_dir) {
  if (!opts.checkpoint && !opts.scores) fail(ErrorKind::usage, "eval needs a checkpoint or a score file");
  std::optional<LoadedModel> loaded;
  if (opts.checkpoint) loaded = load_model(*opts.checkpoint);
  EvalConfig ec = loaded ? loaded->config.eval : EvalConfig{};
  if (opts.split) ec.split = *opts.split;
  if (opts.bootstrap_iters) ec.bootstrap_iters = *opts.bootstrap_iters;
  const std::uint64_t seed = opts.seed ? *opts.seed : loaded ? loaded->config.seed : 0;

  std::vector<eval::ScoreRecord> scores;
  std::optional<data::Splits> splits;
  std::optional<DataIndex> index;
  if (opts.data_dir) {
    index = read_data_index(*opts.data_dir, loaded ? loaded->config.num_tasks() : 0);
    splits = index->splits;
  }
  const unsigned threads = configured_threads();
  if (opts.scores) {
    scores = eval::read_scores(*opts.scores);
    if (splits) {
      const auto& ids = split_ids(*splits, ec.split);
      const std::unordered_set<std::string> keep(ids.begin(), ids.end());
      std::erase_if(scores, [&keep](const eval::ScoreRecord& r) { return !keep.count(r.sample_id); });
    }
  } else {
    if (!opts.data_dir) fail(ErrorKind::usage, "eval with a checkpoint needs --data");
    const auto samples = load_samples(*loaded->model, *opts.data_dir, *index, split_ids(*splits, ec.split), threads);
    if (samples.empty()) fail(ErrorKind::data, "split '" + ec.split + "' is empty");
    scores = score_samples(*loaded->model, samples, threads);
  }

  const auto rows = eval::auc_table(eval::group_by_task(scores), ec.bootstrap_iters, seed, threads);
  make_dir(out_dir);
  write_text(out_dir / "auc.csv", eval::auc_csv(rows));
  if (loaded) {
    eval::write_scores(out_dir / "scores.jsonl", scores);
    RunConfig cfg = loaded->config;
    cfg.eval = ec;
    echo_config(out_dir, cfg);
  } else {
    const json j{{"eval", {{"split", ec.split}, {"bootstrap_iters", ec.bootstrap_iters}}},
                 {"seed", seed},
                 {"source", "scores"},
                 {"split_filter", splits.has_value()}};
    write_text(out_dir / "config.json", j.dump(2) + "\n");
  }
}

void cmd_dca(const fs::path& scores_path, const fs::path& out_dir, double t_lo, double t_hi, std::size_t steps) {
  const auto records = eval::read_scores(scores_path);
  for (const auto& r : records)
    if (r.score < 0 || r.score > 1)
      fail(ErrorKind::data, "DCA needs probability scores in [0, 1]; sample " + r.sample_id + " has " +
                                eval::format_real(r.score));
  const auto grouped = eval::group_by_task(records);
  std::vector<std::pair<std::size_t, eval::NetBenefitCurve>> curves;
  for (const auto& [task, ts] : grouped) curves.emplace_back(task, eval::dca_curve(ts.scores, ts.labels, t_lo, t_hi, steps));
  make_dir(out_dir);
  for (const auto& [task, c] : curves) write_text(out_dir / ("dca_task" + std::to_string(task) + ".csv"), eval::dca_csv(c));
  const json j{{"dca", {{"t_lo", t_lo}, {"t_hi", t_hi}, {"steps", steps}}}};
  write_text(out_dir / "config.json", j.dump(2) + "\n");
}

analysis::Matrix task_weight_matrix(const Model& model, analysis::FlattenMode mode) {
  analysis::Matrix v;
  for (std::size_t k = 0; k < model.num_tasks(); ++k) v.push_back(analysis::flatten_lora(model.deltas(k), mode));
  return v;
}

void cmd_analyze(const fs::path& checkpoint, const fs::path& out_dir, std::optional<analysis::FlattenMode> mode) {
  auto loaded = load_model(checkpoint);
  RunConfig cfg = loaded.config;
  if (mode) cfg.analysis.mode = *mode;
  const auto v = task_weight_matrix(*loaded.model, cfg.analysis.mode);
  const auto selection = analysis::select_k(v, cfg.analysis.k_min, cfg.analysis.k_max);
  const auto pca = analysis::pca_2d(v);
  const auto mds = analysis::mds_2d(analysis::cosine_distances(v));

  json merges = json::array();
  for (const auto& m : selection.merges) merges.push_back({{"a", m.a}, {"b", m.b}, {"height", m.height}, {"size", m.size}});
  json by_k = json::array();
  for (const auto& [k, s] : selection.scores) by_k.push_back({{"k", k}, {"silhouette", s}});
  const json report{{"mode", analysis::to_string(cfg.analysis.mode)},
                    {"k_star", selection.k},
                    {"silhouette", selection.score},
                    {"labels", selection.labels},
                    {"silhouette_by_k", by_k},
                    {"merge_list", merges},
                    {"pca_explained_variance", pca.explained}};
  make_dir(out_dir);
  write_text(out_dir / "clusters.json", report.dump(2) + "\n");
  write_text(out_dir / "pca.csv", coords_csv(pca.coords));
  write_text(out_dir / "mds.csv", coords_csv(mds));
  echo_config(out_dir, cfg);
}

json param_audit_json(const RunConfig& cfg) {
  json sweep = json::array();
  for (std::uint64_t d : {64, 128, 256, 512, 768})
    sweep.push_back({{"D", d}, {"lora", param_count_lora(64, d, 16)}, {"full", param_count_full(64, d)}});
  return {{"config", audit_one(cfg)},
          {"reference", audit_one(reference_config())},
          {"appendix_f",
           {{"d_h", 64}, {"D", 768}, {"r", 16}, {"lora", param_count_lora(64, 768, 16)}, {"full", param_count_full(64, 768)}}},
          {"sweep_d_h64_r16", sweep}};
}

std::string cmd_param_audit(const RunConfig& cfg, const std::optional<fs::path>& out_dir) {
  cfg.validate();
  const json j = param_audit_json(cfg);
  std::ostringstream os;
  auto table = [&os](const char* title, const json& a) {
    os << title << ": D=" << a["hidden_dim"] << " L=" << a["num_layers"] << " M=" << a["modules"] << " r=" << a["rank"]
       << " K=" << a["tasks"] << "\n";
    os << "  component         census      closed_form\n";
    for (const char* c : {"task_embeddings", "positional", "trunk", "heads", "total"}) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "  %-16s %12llu %12llu\n", c, a["census"][c].get<unsigned long long>(),
                    a["closed_form"][c].get<unsigned long long>());
      os << buf;
    }
    os << "  census matches closed form: " << (a["match"].get<bool>() ? "yes" : "NO") << "\n";
    const auto& h = a["square_head_cost"];
    os << "  square-module head cost (d_h=" << h["d_h"] << "): lora " << h["lora"] << ", full " << h["full"] << "\n";
  };
  table("config", j["config"]);
  table("reference", j["reference"]);
  const auto& f = j["appendix_f"];
  os << "closed forms at d_h=64, D=768, r=16: P_LoRA " << f["lora"] << ", P_full " << f["full"] << "\n";
  os << "sweep (d_h=64, r=16):\n";
  for (const auto& s : j["sweep_d_h64_r16"]) os << "  D=" << s["D"] << " lora " << s["lora"] << " full " << s["full"] << "\n";
  if (out_dir) {
    make_dir(*out_dir);
    write_text(*out_dir / "param_audit.json", j.dump(2) + "\n");
    echo_config(*out_dir, cfg);
  }
  return os.str();
}

}  // namespace hl
