// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "json.hpp"

namespace hl::data {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kVolumeMagic[4] = {'H', 'C', 'T', 'V'};
constexpr std::uint8_t kVolumeVersion = 1;
constexpr std::size_t kVolumeHeader = 4 + 1 + 3 * 4;
constexpr std::uint64_t kMaxVoxels = std::uint64_t(1) << 31;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index), 0x5eedu};
  return std::mt19937_64(seq);
}

std::string sample_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%05zu", i);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::data, "cannot write " + path.string());
  os << text;
  if (!os) fail(ErrorKind::data, "write failed for " + path.string());
}

}  // namespace

const char* to_string(SignalKind kind) { return kind == SignalKind::blob ? "blob" : "texture"; }

SignalKind signal_kind_from_string(const std::string& s) {
  if (s == "blob") return SignalKind::blob;
  if (s == "texture") return SignalKind::texture;
  fail(ErrorKind::usage, "unknown signal kind '" + s + "' (expected blob or texture)");
}

std::size_t SyntheticSpec::num_tasks() const {
  std::size_t k = 0;
  for (const auto& f : families) k += f.tasks;
  return k;
}

double SyntheticSpec::task_prevalence(std::size_t task) const {
  return prevalence.size() == 1 ? prevalence[0] : prevalence.at(task);
}

double SyntheticSpec::task_missing_rate(std::size_t task) const {
  return missing_rate.size() == 1 ? missing_rate[0] : missing_rate.at(task);
}

void SyntheticSpec::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::usage, "data config: " + msg); };
  const std::size_t k = num_tasks();
  if (families.empty() || k == 0) bad("at least one family with at least one task is required");
  for (const auto& f : families)
    if (f.tasks == 0) bad("family '" + f.name + "' has no tasks");
  if (height < 4 || width < 4 || depth < 3) bad("volume dims must be at least 4x4x3");
  if (std::uint64_t(height) * width * depth > kMaxVoxels) bad("volume too large");
  if (prevalence.size() != 1 && prevalence.size() != k) bad("prevalence must have 1 or K entries");
  if (missing_rate.size() != 1 && missing_rate.size() != k) bad("missing_rate must have 1 or K entries");
  for (double p : prevalence)
    if (!(p > 0 && p < 1)) bad("prevalences must lie in (0, 1)");
  for (double m : missing_rate)
    if (!(m >= 0 && m < 1)) bad("missing rates must lie in [0, 1)");
  if (!(rho >= 0 && rho <= 1)) bad("rho must lie in [0, 1]");
  if (!(noise_sigma >= 0)) bad("noise_sigma must be non-negative");
  if (!(val_fraction >= 0 && test_fraction >= 0 && val_fraction + test_fraction < 1))
    bad("split fractions must be non-negative and sum below 1");
}

double inverse_normal_cdf(double p) {
  if (!(p > 0 && p < 1)) fail(ErrorKind::usage, "inverse_normal_cdf: p must lie in (0, 1)");
  double lo = -40, hi = 40;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::numbers::sqrt2) < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<TaskSignal> task_layout(const SyntheticSpec& spec) {
  const double h = double(spec.height), w = double(spec.width);
  const double cy = (h - 1) / 2, cx = (w - 1) / 2;
  const double side = std::min(h, w);
  const double ring = side / 6.0;  // disk centers sit this far from the middle
  const double radius = std::max(1.5, side / 10.0);
  const double band = std::max(1.0, side / 6.0);

  std::vector<TaskSignal> out;
  std::size_t task = 0;
  for (std::size_t f = 0; f < spec.families.size(); ++f) {
    const auto& fam = spec.families[f];
    const double n = double(fam.tasks);
    for (std::size_t j = 0; j < fam.tasks; ++j, ++task) {
      TaskSignal s{task, f, fam.signal, {}};
      const double angle = 2 * std::numbers::pi * double(j) / n;
      for (std::size_t y = 0; y < spec.height; ++y)
        for (std::size_t x = 0; x < spec.width; ++x) {
          bool in = false;
          if (fam.signal == SignalKind::blob) {
            const double py = cy + ring * std::sin(angle), px = cx + ring * std::cos(angle);
            in = (double(y) - py) * (double(y) - py) + (double(x) - px) * (double(x) - px) <= radius * radius;
          } else {
            const double edge = std::min({double(y), double(x), h - 1 - double(y), w - 1 - double(x)});
            if (edge < band) {
              double a = std::atan2(double(y) - cy, double(x) - cx);
              if (a < 0) a += 2 * std::numbers::pi;
              in = std::min(std::size_t(a / (2 * std::numbers::pi) * n), fam.tasks - 1) == j;
            }
          }
          if (in) s.pixels.push_back(y * spec.width + x);
        }
      if (s.pixels.empty()) fail(ErrorKind::usage, "volume too small to plant a signal for task " + std::to_string(task));
      out.push_back(std::move(s));
    }
  }
  return out;
}

double rule_statistic(const Volume& v, const TaskSignal& s) {
  const std::size_t slice = std::size_t(v.height) * v.width;
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (std::size_t z = 0; z < v.depth; ++z)
    for (auto p : s.pixels) {
      const double x = v.voxels[z * slice + p];
      sum += x;
      sq += x * x;
      ++n;
    }
  const double mean = sum / double(n);
  if (s.kind == SignalKind::blob) return mean;
  return sq / double(n) - mean * mean;
}

Dataset generate_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t k = spec.num_tasks();
  const auto layout = task_layout(spec);
  std::vector<double> cut(k);
  for (std::size_t t = 0; t < k; ++t) cut[t] = inverse_normal_cdf(1.0 - spec.task_prevalence(t));
  const double shared = std::sqrt(spec.rho), own = std::sqrt(1.0 - spec.rho);
  const std::size_t slice = spec.height * spec.width;

  Dataset d;
  d.volumes.resize(spec.n_samples);
  d.manifest.resize(spec.n_samples);
  d.true_labels.resize(spec.n_samples);
  d.rule_scores.resize(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    auto rng = sample_rng(spec.seed, i);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> family_latent(spec.families.size());
    for (auto& z : family_latent) z = gauss(rng);
    std::vector<int> labels(k);
    for (std::size_t t = 0; t < k; ++t) {
      const double u = shared * family_latent[layout[t].family] + own * gauss(rng);
      labels[t] = u > cut[t] ? 1 : 0;
    }
    std::vector<int> observed = labels;
    for (std::size_t t = 0; t < k; ++t)
      if (unit(rng) < spec.task_missing_rate(t)) observed[t] = kMissing;

    std::vector<double> vox(slice * spec.depth);
    for (auto& v : vox) v = spec.noise_sigma * gauss(rng);
    for (std::size_t t = 0; t < k; ++t) {
      if (!labels[t]) continue;
      for (std::size_t z = 0; z < spec.depth; ++z)
        for (auto p : layout[t].pixels) {
          if (layout[t].kind == SignalKind::blob) vox[z * slice + p] += spec.blob_amplitude;
          else vox[z * slice + p] += spec.texture_amplitude * gauss(rng);
        }
    }
    double mean = 0;
    for (double v : vox) mean += v;
    mean /= double(vox.size());
    double var = 0;
    for (double v : vox) var += (v - mean) * (v - mean);
    var /= double(vox.size());
    const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;

    Volume vol{std::uint32_t(spec.height), std::uint32_t(spec.width), std::uint32_t(spec.depth), {}};
    vol.voxels.resize(vox.size());
    for (std::size_t j = 0; j < vox.size(); ++j) vol.voxels[j] = static_cast<float>((vox[j] - mean) * inv);

    d.rule_scores[i].resize(k);
    for (std::size_t t = 0; t < k; ++t) d.rule_scores[i][t] = rule_statistic(vol, layout[t]);
    d.volumes[i] = std::move(vol);
    d.manifest[i] = {sample_id(i), std::move(observed)};
    d.true_labels[i] = std::move(labels);
  }

  // Threshold halfway between the class-conditional means of the statistic.
  for (std::size_t t = 0; t < k; ++t) {
    double s[2] = {0, 0};
    std::size_t n[2] = {0, 0};
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
      s[d.true_labels[i][t]] += d.rule_scores[i][t];
      ++n[d.true_labels[i][t]];
    }
    double threshold = 0;
    if (n[0] && n[1]) threshold = 0.5 * (s[0] / double(n[0]) + s[1] / double(n[1]));
    else if (n[0] + n[1]) threshold = (s[0] + s[1]) / double(n[0] + n[1]);
    d.rulebook.push_back({t, layout[t].kind == SignalKind::blob ? "region_mean" : "region_variance", threshold});
  }

  const auto n_val = static_cast<std::size_t>(std::llround(double(spec.n_samples) * spec.val_fraction));
  const auto n_test = static_cast<std::size_t>(std::llround(double(spec.n_samples) * spec.test_fraction));
  const std::size_t n_train = spec.n_samples - std::min(spec.n_samples, n_val + n_test);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const auto& id = d.manifest[i].id;
    if (i < n_train) d.splits.train.push_back(id);
    else if (i < n_train + n_val) d.splits.val.push_back(id);
    else d.splits.test.push_back(id);
  }
  return d;
}

std::vector<Tensor> slice_triplets(const Volume& v) {
  if (v.depth < 3) fail(ErrorKind::usage, "slice_triplets: need at least 3 slices, got " + std::to_string(v.depth));
  const std::size_t h = v.height, w = v.width;
  std::vector<Tensor> out;
  for (std::size_t t = 0; t + 3 <= v.depth; t += 3) {
    Tensor img({h, w, 3});
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c) img[(y * w + x) * 3 + c] = static_cast<real>(v.at(y, x, t + c));
    out.push_back(std::move(img));
  }
  return out;
}

void save_volume(const fs::path& path, const Volume& v) {
  if (std::uint64_t(v.height) * v.width * v.depth != v.voxels.size())
    fail(ErrorKind::usage, "volume payload does not match its dims");
  std::string out(kVolumeMagic, 4);
  out.push_back(static_cast<char>(kVolumeVersion));
  put_u32(out, v.height);
  put_u32(out, v.width);
  put_u32(out, v.depth);
  out.reserve(out.size() + 4 * v.voxels.size());
  for (float f : v.voxels) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  write_text(path, out);
}

Volume load_volume(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::data, "cannot open volume " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < kVolumeHeader) fail(ErrorKind::data, "volume " + path.string() + ": truncated header");
  if (std::memcmp(bytes.data(), kVolumeMagic, 4) != 0) fail(ErrorKind::data, "volume " + path.string() + ": bad magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (p[4] != kVolumeVersion)
    fail(ErrorKind::data, "volume " + path.string() + ": unsupported version " + std::to_string(p[4]));
  Volume v{get_u32(p + 5), get_u32(p + 9), get_u32(p + 13), {}};
  const std::uint64_t n = std::uint64_t(v.height) * v.width * v.depth;
  if (n > kMaxVoxels) fail(ErrorKind::data, "volume " + path.string() + ": dims overflow");
  if (bytes.size() - kVolumeHeader < 4 * n)
    fail(ErrorKind::data, "volume " + path.string() + ": truncated payload (" +
                              std::to_string(bytes.size() - kVolumeHeader) + " of " + std::to_string(4 * n) + " bytes)");
  if (bytes.size() - kVolumeHeader > 4 * n) fail(ErrorKind::data, "volume " + path.string() + ": trailing bytes");
  v.voxels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t bits = get_u32(p + kVolumeHeader + 4 * i);
    std::memcpy(&v.voxels[i], &bits, 4);
  }
  return v;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) out += json{{"id", r.id}, {"labels", r.labels}}.dump() + "\n";
  write_text(path, out);
}

std::vector<ManifestRecord> read_manifest(const fs::path& path, std::size_t expected_tasks) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::data, "cannot open manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::data, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("labels") || !j["labels"].is_array())
      fail(ErrorKind::data, where + ": expected {id: string, labels: array}");
    ManifestRecord r{j["id"].get<std::string>(), {}};
    for (const auto& l : j["labels"]) {
      if (!l.is_number_integer()) fail(ErrorKind::data, where + ": labels must be integers");
      const int v = l.get<int>();
      if (v != 0 && v != 1 && v != kMissing) fail(ErrorKind::data, where + ": label " + std::to_string(v) + " not in {0,1,-1}");
      r.labels.push_back(v);
    }
    if (expected_tasks == 0 && !out.empty()) expected_tasks = out.front().labels.size();
    if (expected_tasks && r.labels.size() != expected_tasks)
      fail(ErrorKind::data, where + ": expected " + std::to_string(expected_tasks) + " labels, got " +
                                std::to_string(r.labels.size()));
    if (!ids.insert(r.id).second) fail(ErrorKind::data, where + ": duplicate id '" + r.id + "'");
    out.push_back(std::move(r));
  }
  return out;
}

void write_splits(const fs::path& path, const Splits& s) {
  write_text(path, json{{"train", s.train}, {"val", s.val}, {"test", s.test}}.dump(2) + "\n");
}

Splits read_splits(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::data, "cannot open splits " + path.string());
  try {
    const json j = json::parse(is);
    return {j.at("train").get<std::vector<std::string>>(), j.at("val").get<std::vector<std::string>>(),
            j.at("test").get<std::vector<std::string>>()};
  } catch (const json::exception& e) {
    fail(ErrorKind::data, path.string() + ": " + e.what());
  }
}

void write_dataset(const fs::path& dir, const Dataset& d) {
  std::error_code ec;
  fs::create_directories(dir / "volumes", ec);
  if (ec) fail(ErrorKind::data, "cannot create " + (dir / "volumes").string() + ": " + ec.message());
  for (std::size_t i = 0; i < d.volumes.size(); ++i) save_volume(dir / "volumes" / (d.manifest[i].id + ".hctv"), d.volumes[i]);
  write_manifest(dir / "manifest.jsonl", d.manifest);
  write_splits(dir / "splits.json", d.splits);

  json rules = json::array();
  for (const auto& r : d.rulebook) rules.push_back({{"task", r.task}, {"statistic", r.statistic}, {"threshold", r.threshold}});
  write_text(dir / "rulebook.json", rules.dump(2) + "\n");

  std::string scores;
  for (std::size_t i = 0; i < d.manifest.size(); ++i)
    for (std::size_t t = 0; t < d.manifest[i].labels.size(); ++t) {
      if (d.manifest[i].labels[t] == kMissing) continue;
      scores += json{{"sample_id", d.manifest[i].id}, {"task", t}, {"score", d.rule_scores[i][t]},
                     {"label", d.manifest[i].labels[t]}}
                    .dump() +
                "\n";
    }
  write_text(dir / "rulebook_scores.jsonl", scores);
}

}  // namespace hl::data
