// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hl::eval {

/// Probability that a random positive outranks a random negative; ties count one half.
/// Exact: the Mann-Whitney count is accumulated in integers.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct BootstrapInterval {
  double lo = 0;
  double hi = 0;
  std::size_t retained = 0;
  std::size_t skipped = 0;  // single-class resamples
};

/// RNG stream for one bootstrap iteration: mt19937_64 over seed_seq{seed lo, seed hi, iteration}.
std::mt19937_64 bootstrap_stream(std::uint64_t seed, std::size_t iteration);

/// Linear-interpolation percentile of ascending data, q in [0, 1].
double percentile(const std::vector<double>& sorted, double q);

/// Percentile 2.5/97.5 bootstrap. Each iteration draws n indices with
/// uniform_int_distribution<size_t>(0, n-1) from its own stream, so the
/// result is independent of the thread count.
BootstrapInterval bootstrap_auc_ci(std::span<const double> scores, std::span<const int> labels, std::size_t iters,
                                   std::uint64_t seed, unsigned threads = 1);

/// TP/N - FP/N * t/(1-t), predicting positive when score >= t.
double net_benefit(std::span<const double> scores, std::span<const int> labels, double threshold);

struct NetBenefitCurve {
  std::vector<double> thresholds;
  std::vector<double> nb_model;
  std::vector<double> nb_treat_all;
  std::vector<double> nb_treat_none;
};

inline constexpr double kDcaLow = 0.05;
inline constexpr double kDcaHigh = 0.80;

NetBenefitCurve dca_curve(std::span<const double> scores, std::span<const int> labels, double t_lo = kDcaLow,
                          double t_hi = kDcaHigh, std::size_t steps = 16);

std::string dca_csv(const NetBenefitCurve& curve);

/// One line of a JSON-lines score file.
struct ScoreRecord {
  std::string sample_id;
  std::size_t task = 0;
  double score = 0;
  int label = 0;
};

void write_scores(const std::filesystem::path& path, const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);

struct TaskScores {
  std::vector<double> scores;
  std::vector<int> labels;
};
std::map<std::size_t, TaskScores> group_by_task(const std::vector<ScoreRecord>& records);

struct AucRow {
  std::size_t task = 0;
  double auc = 0;
  bool has_auc = false;
  bool has_ci = false;
  double ci_lo = 0, ci_hi = 0;
  std::size_t n = 0;
};

/// Per-task AUC table; iters == 0 leaves the CI columns empty.
std::vector<AucRow> auc_table(const std::map<std::size_t, TaskScores>& by_task, std::size_t bootstrap_iters,
                              std::uint64_t seed, unsigned threads = 1);
std::string auc_csv(const std::vector<AucRow>& rows);

/// Shortest text that parses back to the same double.
std::string format_real(double v);

}  // namespace hl::eval
