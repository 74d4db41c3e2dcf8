// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Dense>

namespace hl::analysis {
namespace {

void orient(Eigen::Ref<Eigen::VectorXd> v) {
  const double scale = v.cwiseAbs().maxCoeff();
  if (!(scale > 0)) return;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > 1e-9 * scale) {
      if (v[i] < 0) v = -v;
      return;
    }
}

Eigen::MatrixXd to_eigen(const Matrix& v) {
  const std::size_t rows = v.size(), cols = rows ? v[0].size() : 0;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (v[i].size() != cols) fail(ErrorKind::usage, "ragged matrix rows");
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = v[i][j];
  }
  return m;
}

}  // namespace

const char* to_string(FlattenMode mode) { return mode == FlattenMode::factors ? "factors" : "materialized"; }

FlattenMode flatten_mode_from_string(const std::string& s) {
  if (s == "factors") return FlattenMode::factors;
  if (s == "materialized") return FlattenMode::materialized;
  fail(ErrorKind::usage, "unknown flatten mode '" + s + "' (expected factors or materialized)");
}

std::vector<double> flatten_lora(const DeltaSet& deltas, FlattenMode mode) {
  std::vector<double> out;
  for (const auto& [m, f] : deltas) {
    if (mode == FlattenMode::factors) {
      out.insert(out.end(), f.b.data().begin(), f.b.data().end());
      out.insert(out.end(), f.a.data().begin(), f.a.data().end());
    } else {
      const Tensor w = materialize(f);
      out.insert(out.end(), w.data().begin(), w.data().end());
    }
  }
  return out;
}

Pca2d pca_2d(const Matrix& v) {
  if (v.size() < 3) fail(ErrorKind::usage, "PCA needs at least 3 rows, got " + std::to_string(v.size()));
  Eigen::MatrixXd x = to_eigen(v);
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd gram = x * x.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::Index k = gram.rows();
  const double total = std::max(0.0, gram.trace());
  Pca2d out;
  out.coords.assign(v.size(), {0.0, 0.0});
  const double tol = 1e-12 * std::max(1.0, total);
  for (int c = 0; c < 2; ++c) {
    const Eigen::Index idx = k - 1 - c;  // eigenvalues ascend
    const double lambda = std::max(0.0, eig.eigenvalues()[idx]);
    out.explained[c] = total > 0 ? lambda / total : 0.0;
    if (lambda <= tol) {
      out.explained[c] = total > 0 && lambda > 0 ? lambda / total : 0.0;
      continue;
    }
    Eigen::VectorXd loading = x.transpose() * eig.eigenvectors().col(idx);
    loading.normalize();
    orient(loading);
    const Eigen::VectorXd proj = x * loading;
    for (Eigen::Index i = 0; i < proj.size(); ++i) out.coords[i][c] = proj[i];
  }
  return out;
}

Coords mds_2d(const Matrix& distances) {
  const std::size_t n = distances.size();
  if (n < 2) fail(ErrorKind::usage, "MDS needs at least 2 points");
  const Eigen::MatrixXd d = to_eigen(distances);
  if (d.cols() != d.rows()) fail(ErrorKind::usage, "distance matrix must be square");
  const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(d(i, i)) > 1e-12 * scale) fail(ErrorKind::usage, "distance matrix must have a zero diagonal");
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(d(i, j) - d(j, i)) > 1e-9 * scale) fail(ErrorKind::usage, "distance matrix is asymmetric");
  }
  const Eigen::MatrixXd sq = d.cwiseProduct(d);
  const Eigen::MatrixXd j =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd b = -0.5 * j * sq * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (b + b.transpose()));
  Coords out(n, {0.0, 0.0});
  for (int c = 0; c < 2 && c < static_cast<int>(n); ++c) {
    const Eigen::Index idx = static_cast<Eigen::Index>(n) - 1 - c;
    const double lambda = eig.eigenvalues()[idx];
    if (lambda <= 0) continue;
    Eigen::VectorXd u = eig.eigenvectors().col(idx);
    orient(u);
    u *= std::sqrt(lambda);
    for (std::size_t i = 0; i < n; ++i) out[i][c] = u[static_cast<Eigen::Index>(i)];
  }
  return out;
}

Matrix cosine_distances(const Matrix& v) {
  const std::size_t n = v.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (double x : v[i]) s += x * x;
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 0)) fail(ErrorKind::data, "zero-norm task vectors (row " + std::to_string(i) + ")");
  }
  Matrix d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (v[i].size() != v[j].size()) fail(ErrorKind::usage, "task vectors differ in length");
      double dot = 0;
      for (std::size_t f = 0; f < v[i].size(); ++f) dot += v[i][f] * v[j][f];
      const double dist = std::clamp(1.0 - dot / (norms[i] * norms[j]), 0.0, 2.0);
      d[i][j] = d[j][i] = dist;
    }
  return d;
}

std::vector<Merge> complete_linkage(const Matrix& distances) {
  const std::size_t n = distances.size();
  if (n < 2) fail(ErrorKind::usage, "clustering needs at least 2 rows");
  // dist[{a, b}] for active cluster ids a < b
  std::map<std::pair<std::size_t, std::size_t>, double> dist;
  std::vector<std::size_t> active(n), sizes(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    active[i] = i;
    for (std::size_t j = i + 1; j < n; ++j) dist[{i, j}] = distances[i][j];
  }
  std::vector<Merge> merges;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    auto best = dist.begin();
    for (auto it = dist.begin(); it != dist.end(); ++it)
      if (it->second < best->second) best = it;
    const auto [a, b] = best->first;
    const double h = best->second;
    const std::size_t id = n + step;
    sizes.push_back(sizes[a] + sizes[b]);
    merges.push_back({a, b, h, sizes.back()});
    std::erase(active, a);
    std::erase(active, b);
    for (std::size_t c : active) {
      const double da = dist.at({std::min(a, c), std::max(a, c)});
      const double db = dist.at({std::min(b, c), std::max(b, c)});
      dist[{c, id}] = std::max(da, db);
    }
    std::erase_if(dist, [a = a, b = b](const auto& e) {
      return e.first.first == a || e.first.second == a || e.first.first == b || e.first.second == b;
    });
    active.push_back(id);
  }
  return merges;
}

std::vector<Merge> hierarchical_cluster(const Matrix& v) { return complete_linkage(cosine_distances(v)); }

std::vector<int> cut_tree(const std::vector<Merge>& merges, std::size_t n, std::size_t k) {
  if (k < 1 || k > n) fail(ErrorKind::usage, "cannot cut " + std::to_string(n) + " points into " + std::to_string(k));
  std::vector<std::size_t> parent(2 * n);
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  auto find = [&parent](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i + k < n; ++i) {
    parent[find(merges[i].a)] = n + i;
    parent[find(merges[i].b)] = n + i;
  }
  std::vector<int> labels(n);
  std::map<std::size_t, int> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const auto root = find(i);
    auto it = seen.find(root);
    if (it == seen.end()) it = seen.emplace(root, static_cast<int>(seen.size())).first;
    labels[i] = it->second;
  }
  return labels;
}

double silhouette_from_distances(const Matrix& d, const std::vector<int>& labels) {
  const std::size_t n = d.size();
  if (labels.size() != n) fail(ErrorKind::usage, "one label per point required");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) fail(ErrorKind::usage, "silhouette needs at least 2 clusters");
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[labels[i]] == 1) continue;  // singletons contribute 0
    std::map<int, double> sums;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sums[labels[j]] += d[i][j];
    const double a = sums[labels[i]] / static_cast<double>(counts[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : sums)
      if (l != labels[i]) b = std::min(b, s / static_cast<double>(counts[l]));
    const double m = std::max(a, b);
    if (m > 0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

double silhouette(const Matrix& v, const std::vector<int>& labels) {
  return silhouette_from_distances(cosine_distances(v), labels);
}

KSelection select_k(const Matrix& v, std::size_t k_min, std::size_t k_max) {
  const std::size_t n = v.size();
  if (n <= 2) fail(ErrorKind::usage, "k selection needs more than 2 task vectors");
  const std::size_t hi = std::min(k_max, n - 1);
  const std::size_t lo = std::max<std::size_t>(k_min, 2);
  if (lo > hi) fail(ErrorKind::usage, "empty k range after clamping to K-1");
  const Matrix d = cosine_distances(v);
  KSelection out;
  out.merges = complete_linkage(d);
  for (std::size_t k = lo; k <= hi; ++k) {
    auto labels = cut_tree(out.merges, n, k);
    const double s = silhouette_from_distances(d, labels);
    out.scores.emplace_back(k, s);
    if (out.labels.empty() || s > out.score) {
      out.k = k;
      out.score = s;
      out.labels = std::move(labels);
    }
  }
  return out;
}

}  // namespace hl::analysis
