// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace hl::data {

enum class SignalKind {
  blob,     // raised intensity on a small central disk
  texture,  // extra voxel variance on a peripheral sector
};
const char* to_string(SignalKind kind);
SignalKind signal_kind_from_string(const std::string& s);

struct FamilySpec {
  std::string name;
  SignalKind signal = SignalKind::blob;
  std::size_t tasks = 0;
};

struct SyntheticSpec {
  std::size_t n_samples = 1800;
  std::vector<FamilySpec> families{{"cardiac", SignalKind::blob, 3}, {"pulmonary", SignalKind::texture, 3}};
  std::vector<double> prevalence{0.3};    // one value for all tasks, or one per task
  std::vector<double> missing_rate{0.1};  // same convention
  double rho = 0.5;
  double noise_sigma = 0.2;
  double blob_amplitude = 1.0;
  double texture_amplitude = 1.0;
  std::size_t height = 24;
  std::size_t width = 24;
  std::size_t depth = 6;
  double val_fraction = 1.0 / 6.0;
  double test_fraction = 1.0 / 6.0;
  std::uint64_t seed = 0;

  std::size_t num_tasks() const;
  double task_prevalence(std::size_t task) const;
  double task_missing_rate(std::size_t task) const;
  void validate() const;
};

/// Where and how one task's signal is planted.
struct TaskSignal {
  std::size_t task = 0;
  std::size_t family = 0;
  SignalKind kind = SignalKind::blob;
  std::vector<std::size_t> pixels;  // in-slice offsets y*W + x
};

std::vector<TaskSignal> task_layout(const SyntheticSpec& spec);

/// Voxels stored slice-major: index = z*H*W + y*W + x.
struct Volume {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t depth = 0;
  std::vector<float> voxels;

  float at(std::size_t y, std::size_t x, std::size_t z) const { return voxels[(z * height + y) * width + x]; }
  friend bool operator==(const Volume&, const Volume&) = default;
};

inline constexpr int kMissing = -1;

struct ManifestRecord {
  std::string id;
  std::vector<int> labels;  // 0, 1 or kMissing
};

struct RuleEntry {
  std::size_t task = 0;
  std::string statistic;
  double threshold = 0;
};

struct Splits {
  std::vector<std::string> train, val, test;
};

struct Dataset {
  std::vector<Volume> volumes;
  std::vector<ManifestRecord> manifest;
  std::vector<std::vector<int>> true_labels;   // before masking
  std::vector<std::vector<double>> rule_scores;  // [sample][task]
  std::vector<RuleEntry> rulebook;
  Splits splits;
};

Dataset generate_dataset(const SyntheticSpec& spec);

/// The per-task statistic the rulebook thresholds: disk mean or sector variance.
double rule_statistic(const Volume& v, const TaskSignal& signal);

/// Non-overlapping consecutive triplets as H×W×3 tensors; a 1-2 slice tail is dropped.
std::vector<Tensor> slice_triplets(const Volume& v);

void save_volume(const std::filesystem::path& path, const Volume& v);
Volume load_volume(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
/// expected_tasks == 0 accepts any consistent label length.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path, std::size_t expected_tasks = 0);

void write_splits(const std::filesystem::path& path, const Splits& s);
Splits read_splits(const std::filesystem::path& path);

/// volumes/<id>.hctv, manifest.jsonl, splits.json, rulebook.json, rulebook_scores.jsonl
void write_dataset(const std::filesystem::path& dir, const Dataset& d);

double inverse_normal_cdf(double p);

}  // namespace hl::data
