// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run. One PASS/FAIL line per criterion, indented detail lines below.
// Usage: acceptance [--only 1,5,8] [--work DIR] [--keep]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "CLI11.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "gradcheck.hpp"
#include "ops.hpp"

namespace fs = std::filesystem;
using namespace hl;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::vector<std::string> details;
  void note(const std::string& s) { details.push_back(s); }
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

template <class F>
std::optional<ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  } catch (...) {
    return ErrorKind::numeric;  // anything untyped counts as a wrong class
  }
  return std::nullopt;
}

RunConfig desk_config(std::uint64_t seed) { return parse_run_config_text(json{{"seed", seed}}.dump()); }

// Small enough that the whole pipeline runs in about a second.
RunConfig tiny_config(std::uint64_t seed) {
  const json j = {
      {"seed", seed},
      {"data",
       {{"n_samples", 90},
        {"noise_sigma", 0.05},
        {"height", 8},
        {"width", 8},
        {"depth", 6},
        {"missing_rate", 0.1},
        {"families", {{{"name", "a"}, {"signal", "blob"}, {"tasks", 2}}, {{"name", "b"}, {"signal", "texture"}, {"tasks", 1}}}}}},
      {"backbone", {{"hidden_dim", 16}, {"num_layers", 1}, {"num_heads", 2}, {"patch_size", 4}, {"image_side", 8}}},
      {"hyperlora", {{"rank", 2}, {"alpha", 2}, {"task_dim", 8}, {"pos_dim", 4}, {"latent", 8}, {"head_in", 8}, {"mlp_hidden", 8}}},
      {"train", {{"epochs", 3}, {"batch_size", 8}, {"lr", 1e-2}}},
      {"eval", {{"bootstrap_iters", 50}}}};
  return parse_run_config_text(j.dump());
}

double pair_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        ++pairs;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / static_cast<double>(pairs);
}

double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cells[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  const auto c2 = [](double n) { return n * (n - 1) / 2; };
  double index = 0, sa = 0, sb = 0;
  for (const auto& [k, n] : cells) index += c2(n);
  for (const auto& [k, n] : ra) sa += c2(n);
  for (const auto& [k, n] : rb) sb += c2(n);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  const double top = (sa + sb) / 2;
  if (top == expected) return 1.0;
  return (index - expected) / (top - expected);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Every regular file under a, compared byte for byte with its twin under b.
bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  std::set<fs::path> la, lb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) la.insert(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) lb.insert(fs::relative(e.path(), b));
  files = la.size();
  if (la != lb) return false;
  for (const auto& rel : la)
    if (slurp(a / rel) != slurp(b / rel)) return false;
  return true;
}

Tensor random_image(const BackboneConfig& b, std::mt19937_64& rng) {
  return normal({b.image_side, b.image_side, 3}, 1.0, rng);
}

// ---------------------------------------------------------------------------

Outcome zero_delta_identity() {
  Outcome o;
  double worst = 0;
  for (HeadInit init : {HeadInit::zero, HeadInit::lora}) {
    RunConfig cfg = desk_config(11);
    cfg.hyper.head_init = init;
    const Model model(cfg.backbone, cfg.hyper, Variant::hyperct, cfg.num_tasks(), cfg.seed);
    std::mt19937_64 rng(99);
    std::vector<Tensor> images;
    for (int i = 0; i < 5; ++i) images.push_back(random_image(cfg.backbone, rng));
    for (std::size_t t = 0; t < cfg.num_tasks(); ++t) {
      const DeltaSet deltas = model.deltas(t);
      if (deltas.size() != model.backbone().modules().size()) return o;
      for (const auto& img : images) {
        const Tensor base = model.backbone().forward(img);
        const Tensor adapted = model.backbone().forward(img, deltas);
        for (std::size_t i = 0; i < base.size(); ++i) worst = std::max(worst, double(std::abs(base[i] - adapted[i])));
      }
    }
  }
  o.note("max |adapted - base| = " + fmt(worst) + " over 6 tasks x 5 inputs, zero and lora head init");
  o.pass = worst <= 1e-6;
  return o;
}

Outcome gradient_integrity() {
  Outcome o;
  o.pass = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    const GradCheckResult r = run_training_gradient_check(seed, 16);
    o.note("seed " + std::to_string(seed) + ": " + std::to_string(r.checked) + "/" + std::to_string(r.coords.size()) +
           " coords checked, max rel error " + fmt(r.max_rel_error, 3));
    o.pass = o.pass && r.coords.size() == 16 && r.checked > 0 && r.max_rel_error <= 1e-3;
  }
  return o;
}

Outcome side_path_equivalence() {
  Outcome o;
  double worst = 0;
  bool rank_ok = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(4, 48);
    const std::size_t d_in = dim(rng), d_out = dim(rng), n = dim(rng);
    const std::size_t rank = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>({d_in, d_out, 8}))(rng);
    LoraFactors f{normal({d_in, rank}, 0.5, rng), normal({rank, d_out}, 0.5, rng), rank,
                  real(std::uniform_real_distribution<double>(0.5, 32)(rng))};
    const Tensor x = normal({n, d_in}, 1.0, rng), w = normal({d_in, d_out}, 0.5, rng), b = normal({d_out}, 0.5, rng);
    const Tensor side = apply_delta(x, w, b, f);
    const Tensor delta = materialize(f);
    const Tensor dense = ops::add_row(ops::matmul(x, ops::add(w, delta)), b);
    for (std::size_t i = 0; i < side.size(); ++i)
      worst = std::max(worst, std::abs(double(side[i]) - double(dense[i])) / std::max(1.0, std::abs(double(dense[i]))));
    Eigen::MatrixXd m(d_in, d_out);
    for (std::size_t i = 0; i < d_in; ++i)
      for (std::size_t j = 0; j < d_out; ++j) m(i, j) = delta[i * d_out + j];
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
    const double tol = sv(0) * 1e-5;  // single-precision entries
    const auto numeric_rank = static_cast<std::size_t>((sv.array() > tol).count());
    rank_ok = rank_ok && numeric_rank <= rank;
  }
  o.note("max side-path vs dense deviation " + fmt(worst) + " (relative to max(1,|y|)) over 20 seeds");
  o.note(std::string("numerical rank of materialized delta <= r on every seed: ") + (rank_ok ? "yes" : "no"));
  o.pass = worst <= 1e-5 && rank_ok;
  return o;
}

Outcome parameter_audit() {
  Outcome o;
  bool census_ok = true;
  std::vector<RunConfig> configs{desk_config(1), reference_config(), tiny_config(1)};
  configs.push_back(desk_config(1));
  configs.back().hyper.trunk = TrunkKind::mlp;
  for (const auto& c : configs) {
    const auto modules = enumerate_target_modules(c.backbone);
    const auto census = HyperNet::census(HyperNet::plan(c.hyper, modules, c.num_tasks()));
    census_ok = census_ok && census == HyperNet::closed_form(c.hyper, modules, c.num_tasks());
  }
  bool linear = true, quadratic = true;
  const std::uint64_t base = 64;
  for (std::uint64_t d : {64, 128, 256, 512, 768}) {
    linear = linear && param_count_lora(64, d, 16) * base == param_count_lora(64, base, 16) * d;
    quadratic = quadratic && param_count_full(64, d) * base * base == param_count_full(64, base) * d * d;
  }
  const std::uint64_t lora = param_count_lora(64, 768, 16), full = param_count_full(64, 768);
  o.note("census == closed form on desk, reference, tiny and mlp-trunk configs: " + std::string(census_ok ? "yes" : "no"));
  o.note("P_LoRA linear in D: " + std::string(linear ? "yes" : "no") + ", P_full quadratic in D: " + (quadratic ? "yes" : "no"));
  o.note("P_LoRA(64,768,16) = " + std::to_string(lora) + ", P_full(64,768) = " + std::to_string(full));
  o.pass = census_ok && linear && quadratic && lora == 1572864 && full == 37748736;
  return o;
}

Outcome auc_oracle() {
  Outcome o;
  std::size_t matched = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::uniform_int_distribution<int>(0, 5)(rng) / 5.0;  // coarse grid forces ties
      y[i] = std::bernoulli_distribution(0.4)(rng);
    }
    y[0] = 1;
    y[1] = 0;
    matched += eval::roc_auc(s, y) == pair_auc(s, y);
  }
  o.note(std::to_string(matched) + "/200 instances equal the pair-counting oracle exactly");
  o.pass = matched == 200;
  return o;
}

Outcome dca_closed_forms() {
  Outcome o;
  double none = 0, all = 0, perfect = 0;
  bool dominates = true, grid_ok = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 200;
    std::vector<int> y(n);
    std::vector<double> s(n), oracle(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = std::bernoulli_distribution(0.1 + 0.04 * double(seed))(rng);
      s[i] = std::uniform_real_distribution<double>(0, 1)(rng);
      oracle[i] = y[i];
    }
    y[0] = 1;
    y[1] = 0;
    oracle[0] = 1;
    oracle[1] = 0;
    const double pi = std::accumulate(y.begin(), y.end(), 0.0) / double(n);
    const auto c = eval::dca_curve(s, y);
    const auto p = eval::dca_curve(oracle, y);
    grid_ok = grid_ok && c.thresholds.front() == 0.05 && c.thresholds.back() == 0.80;
    for (std::size_t k = 0; k < c.thresholds.size(); ++k) {
      const double t = c.thresholds[k];
      none = std::max(none, std::abs(c.nb_treat_none[k]));
      all = std::max(all, std::abs(c.nb_treat_all[k] - (pi - (1 - pi) * t / (1 - t))));
      perfect = std::max(perfect, std::abs(p.nb_model[k] - pi));
      dominates = dominates && p.nb_model[k] >= p.nb_treat_all[k] && p.nb_model[k] >= p.nb_treat_none[k];
    }
  }
  o.note("max |treat-none| " + fmt(none) + ", treat-all closed-form gap " + fmt(all) + ", perfect-model gap to pi " +
         fmt(perfect));
  o.note(std::string("grid spans 5%..80%: ") + (grid_ok ? "yes" : "no") + ", perfect model dominates: " +
         (dominates ? "yes" : "no"));
  o.pass = none == 0 && all <= 1e-12 && perfect <= 1e-12 && dominates && grid_ok;
  return o;
}

std::pair<std::vector<double>, std::vector<int>> noisy_instance(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0, 1);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i % 3 == 0;
    s[i] = noise(rng) + (y[i] ? 1.0 : 0.0);
  }
  return {s, y};
}

Outcome bootstrap_behaviour() {
  Outcome o;
  std::map<std::size_t, eval::TaskScores> tasks;
  for (std::size_t t = 0; t < 3; ++t) {
    auto [s, y] = noisy_instance(150 + 20 * t, 500 + t);
    tasks[t] = {s, y};
  }
  const std::string a = eval::auc_csv(eval::auc_table(tasks, 1000, 42, 1));
  const std::string b = eval::auc_csv(eval::auc_table(tasks, 1000, 42, 1));
  const std::string c = eval::auc_csv(eval::auc_table(tasks, 1000, 42, 4));
  const bool deterministic = a == b && a == c;

  std::size_t contained = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto [s, y] = noisy_instance(100 + seed, seed);
    const double auc = eval::roc_auc(s, y);
    const auto ci = eval::bootstrap_auc_ci(s, y, 1000, seed);
    contained += ci.lo <= auc && auc <= ci.hi;
  }

  std::vector<double> small, large;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (auto [n, out] : {std::pair{std::size_t(200), &small}, std::pair{std::size_t(2000), &large}}) {
      auto [s, y] = noisy_instance(n, 1000 + seed);
      const auto ci = eval::bootstrap_auc_ci(s, y, 1000, seed);
      out->push_back(ci.hi - ci.lo);
    }
  }
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return (v[v.size() / 2 - 1] + v[v.size() / 2]) / 2;
  };
  o.note(std::string("byte-identical CSV on rerun and across thread counts: ") + (deterministic ? "yes" : "no"));
  o.note("CI contains point estimate on " + std::to_string(contained) + "/100 instances");
  o.note("median CI width n=200: " + fmt(median(small)) + ", n=2000: " + fmt(median(large)));
  o.pass = deterministic && contained >= 99 && median(large) < median(small);
  return o;
}

// Shared between the training benchmark and the clustering criterion.
struct BenchmarkRun {
  std::uint64_t seed = 0;
  RunConfig cfg;
  fs::path hyper_ckpt;
  bool trained = false;
};
std::vector<BenchmarkRun> g_bench;

double test_mean_auc(const fs::path& ckpt, const fs::path& data_dir) {
  const LoadedModel lm = load_model(ckpt);
  const DataIndex index = read_data_index(data_dir, lm.model->num_tasks());
  const auto samples = load_samples(*lm.model, data_dir, index, index.splits.test);
  const auto [per_task, mean] = task_aucs(score_samples(*lm.model, samples), lm.model->num_tasks());
  if (!mean) fail(ErrorKind::data, "test split has no scorable task");
  return *mean;
}

double rulebook_min_auc(const RunConfig& cfg) {
  const data::Dataset d = data::generate_dataset(cfg.data);
  const std::set<std::string> test(d.splits.test.begin(), d.splits.test.end());
  double worst = 1;
  for (std::size_t t = 0; t < cfg.num_tasks(); ++t) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < d.manifest.size(); ++i) {
      if (!test.count(d.manifest[i].id) || d.manifest[i].labels[t] == data::kMissing) continue;
      s.push_back(d.rule_scores[i][t]);
      y.push_back(d.manifest[i].labels[t]);
    }
    worst = std::min(worst, eval::roc_auc(s, y));
  }
  return worst;
}

Outcome training_benchmark(const fs::path& work) {
  Outcome o;
  std::size_t wins = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t seed : {1, 2, 3}) {
    BenchmarkRun run{seed, desk_config(seed), {}, false};
    const fs::path root = work / ("bench_seed" + std::to_string(seed));
    cmd_gen_data(run.cfg, root / "data");
    const DataIndex index = read_data_index(root / "data", run.cfg.num_tasks());
    std::map<Variant, double> auc;
    for (Variant v : {Variant::hyperct, Variant::ew_baseline}) {
      RunConfig cfg = run.cfg;
      cfg.train.variant = v;
      const fs::path out = root / to_string(v);
      cmd_train(cfg, root / "data", out);
      auc[v] = test_mean_auc(out / "checkpoint.bin", root / "data");
    }
    run.hyper_ckpt = root / to_string(Variant::hyperct) / "checkpoint.bin";
    run.trained = true;
    const double ceiling = rulebook_min_auc(run.cfg);
    const bool ok = auc[Variant::hyperct] >= 0.85 && auc[Variant::hyperct] >= auc[Variant::ew_baseline] - 0.02 &&
                    ceiling >= 0.95;
    wins += ok;
    o.note("seed " + std::to_string(seed) + ": split " + std::to_string(index.splits.train.size()) + "/" +
           std::to_string(index.splits.val.size()) + "/" + std::to_string(index.splits.test.size()) +
           ", hyperct test mean AUC " + fmt(auc[Variant::hyperct], 4) + ", ew_baseline " +
           fmt(auc[Variant::ew_baseline], 4) + ", rulebook min AUC " + fmt(ceiling, 4) + (ok ? "  ok" : "  miss"));
    g_bench.push_back(run);
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60;
  o.note("wall time " + fmt(minutes, 3) + " min for 3 seeds x 2 variants");
  o.pass = wins >= 2 && minutes <= 15;
  return o;
}

Outcome weight_clustering(const fs::path& work) {
  Outcome o;
  if (g_bench.empty()) {
    o.note("needs the training benchmark models; run criterion 8 as well");
    return o;
  }
  std::size_t wins = 0;
  for (const auto& run : g_bench) {
    const fs::path out = work / ("clusters_seed" + std::to_string(run.seed));
    cmd_analyze(run.hyper_ckpt, out, analysis::FlattenMode::materialized);
    const json report = json::parse(slurp(out / "clusters.json"));
    const auto k = report.at("k_star").get<std::size_t>();
    const auto labels = report.at("labels").get<std::vector<int>>();
    std::vector<int> families;
    for (const auto& s : data::task_layout(run.cfg.data)) families.push_back(static_cast<int>(s.family));
    const double ari = adjusted_rand(labels, families);
    const bool ok = (k == 2 || k == 3) && ari >= 0.5;
    wins += ok;
    o.note("seed " + std::to_string(run.seed) + ": k* = " + std::to_string(k) + ", silhouette " +
           fmt(report.at("silhouette").get<double>(), 4) + ", ARI vs families " + fmt(ari, 4) + (ok ? "  ok" : "  miss"));
  }
  o.pass = wins >= 2;
  return o;
}

void run_pipeline(const RunConfig& cfg, const fs::path& root) {
  cmd_gen_data(cfg, root / "data");
  cmd_train(cfg, root / "data", root / "train");
  EvalOptions e;
  e.checkpoint = root / "train" / "checkpoint.bin";
  e.data_dir = root / "data";
  cmd_eval(e, root / "eval");
  cmd_dca(root / "eval" / "scores.jsonl", root / "dca", eval::kDcaLow, eval::kDcaHigh, 16);
  cmd_analyze(root / "train" / "checkpoint.bin", root / "analyze");
}

Outcome determinism_and_formats(const fs::path& work) {
  Outcome o;
  const RunConfig cfg = tiny_config(7);
  run_pipeline(cfg, work / "pipe_a");
  run_pipeline(cfg, work / "pipe_b");
  std::size_t files = 0;
  const bool identical = same_tree(work / "pipe_a", work / "pipe_b", files);
  o.note("pipeline rerun byte-identical: " + std::string(identical ? "yes" : "no") + " (" + std::to_string(files) +
         " files)");

  fs::path vol;
  for (const auto& e : fs::recursive_directory_iterator(work / "pipe_a" / "data"))
    if (e.is_regular_file() && e.path().parent_path().filename() == "volumes") {
      vol = e.path();
      break;
    }
  const data::Volume v = data::load_volume(vol);
  data::save_volume(work / "copy.vol", v);
  const bool vol_rt = slurp(vol) == slurp(work / "copy.vol") && data::load_volume(work / "copy.vol") == v;

  const fs::path ck = work / "pipe_a" / "train" / "checkpoint.bin";
  const Checkpoint c = load_checkpoint(ck);
  save_checkpoint(work / "copy.ckpt", c);
  const auto bytes = read_file(ck);
  const Checkpoint reread = deserialize_checkpoint(bytes);
  bool ck_rt = read_file(work / "copy.ckpt") == bytes && serialize_checkpoint(reread) == bytes;
  for (const auto& [path, t] : c.tensors) {
    const Tensor& back = reread.tensors.at(path);
    ck_rt = ck_rt && back.shape() == t.shape() &&
            std::memcmp(back.data().data(), t.data().data(), t.size() * sizeof(real)) == 0;
  }
  o.note(std::string("volume round-trip bit-exact: ") + (vol_rt ? "yes" : "no") + ", checkpoint round-trip bit-exact: " +
         (ck_rt ? "yes" : "no"));

  const std::string vol_bytes = slurp(vol), ck_bytes(bytes.begin(), bytes.end());
  const auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(work / name, std::ios::binary) << content;
    return work / name;
  };
  std::string bad_magic = vol_bytes;
  bad_magic[0] = 'X';
  std::string bad_ck = ck_bytes;
  bad_ck[0] ^= 0xFF;
  const std::vector<std::pair<std::string, std::function<void()>>> corruptions{
      {"volume bad magic", [&] { data::load_volume(write("c1.vol", bad_magic)); }},
      {"volume truncated", [&] { data::load_volume(write("c2.vol", vol_bytes.substr(0, vol_bytes.size() - 3))); }},
      {"volume trailing bytes", [&] { data::load_volume(write("c3.vol", vol_bytes + "x")); }},
      {"volume missing", [&] { data::load_volume(work / "absent.vol"); }},
      {"checkpoint bad magic", [&] { load_checkpoint(write("c4.ckpt", bad_ck)); }},
      {"checkpoint truncated", [&] { load_checkpoint(write("c5.ckpt", ck_bytes.substr(0, ck_bytes.size() / 2))); }},
      {"checkpoint empty", [&] { load_checkpoint(write("c6.ckpt", "")); }},
      {"manifest malformed", [&] { data::read_manifest(write("c7.jsonl", "{\"id\": 3\n"), 3); }},
      {"scores malformed", [&] { eval::read_scores(write("c8.jsonl", "not json\n")); }},
  };
  std::size_t classified = 0;
  for (const auto& [name, f] : corruptions) {
    const auto k = error_kind(f);
    const bool ok = k == ErrorKind::data;
    classified += ok;
    if (!ok) o.note("  " + name + ": expected data error");
  }
  o.note("corrupted inputs raising data errors: " + std::to_string(classified) + "/" +
         std::to_string(corruptions.size()));
  o.pass = identical && vol_rt && ck_rt && classified == corruptions.size();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HyperLoRA acceptance run"};
  std::vector<int> only;
  std::string work_arg;
  bool keep = false;
  app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
  app.add_option("--work", work_arg, "scratch directory");
  app.add_flag("--keep", keep, "keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = work_arg.empty() ? fs::temp_directory_path() / ("hl_accept_" + std::to_string(getpid()))
                                         : fs::path(work_arg);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"zero-delta identity", zero_delta_identity},
      {"gradient integrity", gradient_integrity},
      {"low-rank side-path equivalence", side_path_equivalence},
      {"parameter-complexity audit", parameter_audit},
      {"AUC oracle equivalence", auc_oracle},
      {"DCA closed forms", dca_closed_forms},
      {"bootstrap CI behaviour", bootstrap_behaviour},
      {"synthetic training benchmark", [&] { return training_benchmark(work); }},
      {"weight-space clustering", [&] { return weight_clustering(work); }},
      {"determinism and formats", [&] { return determinism_and_formats(work); }},
  };

  std::size_t failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note(std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2d %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), secs);
    for (const auto& d : o.details) std::printf("       %s\n", d.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%zu/%zu criteria passed\n", ran - failed, ran);
  if (!keep) fs::remove_all(work);
  return failed == 0 ? 0 : 1;
}
