// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "parallel.hpp"
#include "tensor.hpp"

namespace hl::eval {

using nlohmann::json;

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::usage, "scores and labels differ in length");
  for (int l : labels)
    if (l != 0 && l != 1) fail(ErrorKind::usage, "labels must be 0 or 1");
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Doubled Mann-Whitney U: each positive scores 2 per lower negative, 1 per tied negative.
  std::uint64_t twice_u = 0, negatives_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) ++pos;
      else ++neg;
      ++j;
    }
    twice_u += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) fail(ErrorKind::data, "AUC needs at least one positive and one negative");
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::mt19937_64 bootstrap_stream(std::uint64_t seed, std::size_t iteration) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(iteration),
                    std::uint32_t(std::uint64_t(iteration) >> 32)};
  return std::mt19937_64(seq);
}

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) fail(ErrorKind::usage, "percentile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

BootstrapInterval bootstrap_auc_ci(std::span<const double> scores, std::span<const int> labels, std::size_t iters,
                                   std::uint64_t seed, unsigned threads) {
  roc_auc(scores, labels);  // validates the input
  if (iters == 0) fail(ErrorKind::usage, "bootstrap needs at least one iteration");
  const std::size_t n = scores.size();
  std::vector<double> aucs(iters, 0.0);
  std::vector<char> ok(iters, 0);
  parallel_for(iters, threads, [&](std::size_t it) {
    auto rng = bootstrap_stream(seed, it);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> s(n);
    std::vector<int> l(n);
    int classes = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = pick(rng);
      s[i] = scores[j];
      l[i] = labels[j];
      classes |= 1 << l[i];
    }
    if (classes != 3) return;
    aucs[it] = roc_auc(s, l);
    ok[it] = 1;
  });
  BootstrapInterval out;
  std::vector<double> kept;
  for (std::size_t it = 0; it < iters; ++it)
    if (ok[it]) kept.push_back(aucs[it]);
  out.retained = kept.size();
  out.skipped = iters - kept.size();
  if (2 * out.skipped > iters)
    fail(ErrorKind::data, "bootstrap skipped " + std::to_string(out.skipped) + " of " + std::to_string(iters) +
                              " single-class resamples");
  std::sort(kept.begin(), kept.end());
  out.lo = percentile(kept, 0.025);
  out.hi = percentile(kept, 0.975);
  return out;
}

double net_benefit(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  if (!(threshold > 0 && threshold < 1)) fail(ErrorKind::usage, "threshold must lie in (0, 1)");
  if (scores.empty()) fail(ErrorKind::usage, "net benefit of an empty sample");
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= threshold) (labels[i] ? tp : fp)++;
  const double n = static_cast<double>(scores.size());
  return static_cast<double>(tp) / n - static_cast<double>(fp) / n * threshold / (1.0 - threshold);
}

NetBenefitCurve dca_curve(std::span<const double> scores, std::span<const int> labels, double t_lo, double t_hi,
                          std::size_t steps) {
  if (!(t_lo > 0 && t_hi < 1 && t_lo < t_hi)) fail(ErrorKind::usage, "DCA range must satisfy 0 < t_lo < t_hi < 1");
  if (steps < 2) fail(ErrorKind::usage, "DCA needs at least 2 grid steps");
  const std::vector<double> all(scores.size(), 1.0);
  NetBenefitCurve c;
  for (std::size_t i = 0; i < steps; ++i) {
    const double t =
        i + 1 == steps ? t_hi : t_lo + (t_hi - t_lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    c.thresholds.push_back(t);
    c.nb_model.push_back(net_benefit(scores, labels, t));
    c.nb_treat_all.push_back(net_benefit(all, labels, t));
    c.nb_treat_none.push_back(0.0);
  }
  return c;
}

std::string dca_csv(const NetBenefitCurve& c) {
  std::string out = "threshold,nb_model,nb_treat_all,nb_treat_none\n";
  for (std::size_t i = 0; i < c.thresholds.size(); ++i)
    out += format_real(c.thresholds[i]) + "," + format_real(c.nb_model[i]) + "," + format_real(c.nb_treat_all[i]) + "," +
           format_real(c.nb_treat_none[i]) + "\n";
  return out;
}

void write_scores(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::data, "cannot write " + path.string());
  for (const auto& r : records)
    os << json{{"sample_id", r.sample_id}, {"task", r.task}, {"score", r.score}, {"label", r.label}}.dump() << '\n';
  if (!os) fail(ErrorKind::data, "write failed for " + path.string());
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::data, "cannot open score file " + path.string());
  std::vector<ScoreRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      ScoreRecord r{j.at("sample_id").get<std::string>(), j.at("task").get<std::size_t>(), j.at("score").get<double>(),
                    j.at("label").get<int>()};
      if (r.label != 0 && r.label != 1) fail(ErrorKind::data, where + ": label must be 0 or 1");
      if (!std::isfinite(r.score)) fail(ErrorKind::data, where + ": score is not finite");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorKind::data, where + ": malformed score record: " + e.what());
    }
  }
  return out;
}

std::map<std::size_t, TaskScores> group_by_task(const std::vector<ScoreRecord>& records) {
  std::map<std::size_t, TaskScores> out;
  for (const auto& r : records) {
    auto& t = out[r.task];
    t.scores.push_back(r.score);
    t.labels.push_back(r.label);
  }
  return out;
}

std::vector<AucRow> auc_table(const std::map<std::size_t, TaskScores>& by_task, std::size_t bootstrap_iters,
                              std::uint64_t seed, unsigned threads) {
  std::vector<AucRow> rows;
  for (const auto& [task, ts] : by_task) {
    AucRow row;
    row.task = task;
    row.n = ts.scores.size();
    const bool pos = std::count(ts.labels.begin(), ts.labels.end(), 1) > 0;
    const bool neg = std::count(ts.labels.begin(), ts.labels.end(), 0) > 0;
    if (pos && neg) {
      row.auc = roc_auc(ts.scores, ts.labels);
      row.has_auc = true;
      if (bootstrap_iters > 0) {
        const auto ci = bootstrap_auc_ci(ts.scores, ts.labels, bootstrap_iters, seed + task, threads);
        row.ci_lo = ci.lo;
        row.ci_hi = ci.hi;
        row.has_ci = true;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

std::string auc_csv(const std::vector<AucRow>& rows) {
  std::string out = "task,auc,ci_lo,ci_hi,n\n";
  for (const auto& r : rows) {
    out += std::to_string(r.task) + ",";
    out += (r.has_auc ? format_real(r.auc) : "") + ",";
    out += (r.has_ci ? format_real(r.ci_lo) : "") + ",";
    out += (r.has_ci ? format_real(r.ci_hi) : "") + ",";
    out += std::to_string(r.n) + "\n";
  }
  return out;
}

}  // namespace hl::eval
