// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "analysis.hpp"
#include "doctest.h"

using namespace hl;
using namespace hl::analysis;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> z(0, sd);
  Matrix m(rows, std::vector<double>(cols));
  for (auto& r : m)
    for (auto& x : r) x = z(rng);
  return m;
}

Matrix euclidean(const Matrix& v) {
  Matrix d(v.size(), std::vector<double>(v.size(), 0));
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) {
      double s = 0;
      for (std::size_t f = 0; f < v[i].size(); ++f) s += (v[i][f] - v[j][f]) * (v[i][f] - v[j][f]);
      d[i][j] = std::sqrt(s);
    }
  return d;
}

double coord_dist(const Coords& c, std::size_t i, std::size_t j) { return std::hypot(c[i][0] - c[j][0], c[i][1] - c[j][1]); }

// Naive agglomeration: recompute every cluster pair's max distance each step.
std::vector<Merge> naive_linkage(const Matrix& d) {
  const std::size_t n = d.size();
  std::vector<std::vector<std::size_t>> members;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < n; ++i) {
    members.push_back({i});
    ids.push_back(i);
  }
  std::vector<Merge> out;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    std::pair<std::size_t, std::size_t> best_ids{0, 0};
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < ids.size(); ++j) {
        if (ids[i] >= ids[j]) continue;
        double h = 0;
        for (std::size_t p : members[i])
          for (std::size_t q : members[j]) h = std::max(h, d[p][q]);
        const std::pair<std::size_t, std::size_t> key{ids[i], ids[j]};
        if (h < best || (h == best && key < best_ids)) {
          best = h;
          bi = i;
          bj = j;
          best_ids = key;
        }
      }
    std::vector<std::size_t> merged = members[bi];
    merged.insert(merged.end(), members[bj].begin(), members[bj].end());
    out.push_back({best_ids.first, best_ids.second, best, merged.size()});
    const std::size_t hi = std::max(bi, bj), lo = std::min(bi, bj);
    members.erase(members.begin() + hi);
    ids.erase(ids.begin() + hi);
    members.erase(members.begin() + lo);
    ids.erase(ids.begin() + lo);
    members.push_back(merged);
    ids.push_back(n + step);
  }
  return out;
}

double naive_silhouette(const Matrix& d, const std::vector<int>& labels) {
  const std::size_t n = d.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = 0;
    std::size_t same = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) {
        a += d[i][j];
        ++same;
      }
    if (same == 0) continue;
    a /= double(same);
    double b = std::numeric_limits<double>::infinity();
    const int max_label = *std::max_element(labels.begin(), labels.end());
    for (int l = 0; l <= max_label; ++l) {
      if (l == labels[i]) continue;
      double s = 0;
      std::size_t c = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (labels[j] == l) {
          s += d[i][j];
          ++c;
        }
      if (c) b = std::min(b, s / double(c));
    }
    total += (b - a) / std::max(a, b);
  }
  return total / double(n);
}

// Groups of `per` noisy copies of random unit centers.
Matrix planted_groups(std::size_t groups, std::size_t per, std::size_t dim, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0, 1), noise(0, sigma);
  Matrix out;
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<double> c(dim);
    double norm = 0;
    for (auto& x : c) {
      x = z(rng);
      norm += x * x;
    }
    for (auto& x : c) x /= std::sqrt(norm);
    for (std::size_t i = 0; i < per; ++i) {
      std::vector<double> row = c;
      for (auto& x : row) x += noise(rng);
      out.push_back(row);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("flatten zero factors gives zeros in both modes") {
  DeltaSet d;
  d.emplace(0, LoraFactors{Tensor({3, 2}), Tensor({2, 4}), 2, 4});
  d.emplace(1, LoraFactors{Tensor({4, 2}), Tensor({2, 3}), 2, 4});
  const auto f = flatten_lora(d, FlattenMode::factors), m = flatten_lora(d, FlattenMode::materialized);
  CHECK(f.size() == 2 * (3 + 4) + 2 * (4 + 3));
  CHECK(m.size() == 12 + 12);
  for (double x : f) CHECK(x == 0);
  for (double x : m) CHECK(x == 0);
}

TEST_CASE("flatten order and materialized outer product") {
  DeltaSet d;
  d.emplace(1, LoraFactors{Tensor({2, 1}, std::vector<real>{5, 6}), Tensor({1, 2}, std::vector<real>{7, 8}), 1, 1});
  d.emplace(0, LoraFactors{Tensor({2, 1}, std::vector<real>{1, 2}), Tensor({1, 2}, std::vector<real>{3, 4}), 1, 2});
  CHECK(flatten_lora(d, FlattenMode::factors) == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  // alpha/r = 2 for module 0, 1 for module 1
  CHECK(flatten_lora(d, FlattenMode::materialized) == std::vector<double>{6, 8, 12, 16, 35, 40, 42, 48});
  CHECK(flatten_mode_from_string("factors") == FlattenMode::factors);
  CHECK(flatten_mode_from_string("materialized") == FlattenMode::materialized);
  CHECK_THROWS_AS(flatten_mode_from_string("dense"), Error);
}

TEST_CASE("pca of planar points") {
  std::mt19937_64 rng(1);
  const Matrix basis = random_matrix(2, 6, rng), w = random_matrix(8, 2, rng);
  Matrix v(8, std::vector<double>(6, 0));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t f = 0; f < 6; ++f) v[i][f] = 3 + w[i][0] * basis[0][f] + w[i][1] * basis[1][f];
  const Pca2d p = pca_2d(v);
  CHECK(p.explained[0] + p.explained[1] == doctest::Approx(1).epsilon(1e-9));
  CHECK(p.explained[0] >= p.explained[1]);
  // 2-D coordinates reproduce all pairwise distances
  const Matrix d = euclidean(v);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(coord_dist(p.coords, i, j) - d[i][j]) <= 1e-9);
}

TEST_CASE("pca of collinear points") {
  Matrix v;
  for (int i = 0; i < 5; ++i) v.push_back({1.0 * i, 2.0 * i, -1.0 * i});
  const Pca2d p = pca_2d(v);
  CHECK(p.explained[0] == doctest::Approx(1));
  CHECK(p.explained[1] == doctest::Approx(0).epsilon(1e-12));
  CHECK_THROWS_AS(pca_2d(Matrix{{1, 2}, {3, 4}}), Error);
}

TEST_CASE("pca matches the covariance eigendecomposition") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix v = random_matrix(10, 40, rng);
    const Pca2d p = pca_2d(v);

    Eigen::MatrixXd x(10, 40);
    for (int i = 0; i < 10; ++i)
      for (int f = 0; f < 40; ++f) x(i, f) = v[i][f];
    x.rowwise() -= x.colwise().mean();
    const Eigen::MatrixXd cov = x.transpose() * x / 9.0;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const double total = cov.trace();
    for (int c = 0; c < 2; ++c) {
      const Eigen::VectorXd u = eig.eigenvectors().col(39 - c);
      const Eigen::VectorXd proj = x * u;
      CHECK(p.explained[c] == doctest::Approx(eig.eigenvalues()[39 - c] / total).epsilon(1e-9));
      const double sign = proj[0] * p.coords[0][c] >= 0 ? 1 : -1;
      for (int i = 0; i < 10; ++i) CHECK(std::abs(p.coords[i][c] - sign * proj[i]) <= 1e-5);
    }
  }
}

TEST_CASE("pca is translation invariant") {
  std::mt19937_64 rng(2);
  const Matrix v = random_matrix(7, 12, rng);
  Matrix shifted = v;
  for (auto& r : shifted)
    for (std::size_t f = 0; f < r.size(); ++f) r[f] += 10.0 + double(f);
  const Pca2d a = pca_2d(v), b = pca_2d(shifted);
  for (std::size_t i = 0; i < 7; ++i)
    for (int c = 0; c < 2; ++c) CHECK(std::abs(a.coords[i][c] - b.coords[i][c]) <= 1e-9);
}

TEST_CASE("mds of a line and an equilateral triangle") {
  const Matrix line = euclidean(Matrix{{0}, {1}, {3}});
  const Coords c = mds_2d(line);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(coord_dist(c, i, j) - line[i][j]) <= 1e-6);

  const Matrix tri{{0, 2, 2}, {2, 0, 2}, {2, 2, 0}};
  const Coords t = mds_2d(tri);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) CHECK(std::abs(coord_dist(t, i, j) - 2) <= 1e-6);
}

TEST_CASE("mds recovers planar configurations up to rigid motion") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix pts = random_matrix(9, 2, rng);
    const Coords c = mds_2d(euclidean(pts));
    // orthogonal Procrustes on centered configurations
    Eigen::MatrixXd x(9, 2), y(9, 2);
    for (int i = 0; i < 9; ++i) {
      x.row(i) << c[i][0], c[i][1];
      y.row(i) << pts[i][0], pts[i][1];
    }
    x.rowwise() -= x.colwise().mean();
    y.rowwise() -= y.colwise().mean();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(x.transpose() * y, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::MatrixXd r = svd.matrixU() * svd.matrixV().transpose();
    CHECK((x * r - y).norm() <= 1e-5);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t j = 0; j < 9; ++j) CHECK(std::abs(coord_dist(c, i, j) - std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1])) <= 1e-5);
  }
}

TEST_CASE("mds rejects malformed distance matrices") {
  CHECK_THROWS_AS(mds_2d(Matrix{{0, 1}, {2, 0}}), Error);
  CHECK_THROWS_AS(mds_2d(Matrix{{1, 1}, {1, 0}}), Error);
  CHECK_THROWS_AS(mds_2d(Matrix{{0, 1, 2}, {1, 0, 2}}), Error);
}

TEST_CASE("cosine distances") {
  const Matrix d = cosine_distances(Matrix{{1, 0}, {0, 2}, {-3, 0}, {2, 0}});
  CHECK(d[0][1] == doctest::Approx(1));
  CHECK(d[0][2] == doctest::Approx(2));
  CHECK(d[0][3] == 0);
  try {
    cosine_distances(Matrix{{1, 0}, {0, 0}});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    CHECK(std::string(e.what()).find("zero-norm task vectors") != std::string::npos);
  }
}

TEST_CASE("linkage trivial cases") {
  const auto same = hierarchical_cluster(Matrix{{1, 2}, {1, 2}, {-2, 1}});
  CHECK(same[0].height <= 1e-15);
  CHECK(same[0].a == 0);
  CHECK(same[0].b == 1);

  const auto axes = hierarchical_cluster(Matrix{{1, 0}, {1, 0}, {0, 1}});
  REQUIRE(axes.size() == 2);
  CHECK(axes[0].a == 0);
  CHECK(axes[0].b == 1);
  CHECK(axes[0].height == 0);
  CHECK(axes[1].a == 2);
  CHECK(axes[1].b == 3);
  CHECK(axes[1].height == doctest::Approx(1));
  CHECK(axes[1].size == 3);
  CHECK_THROWS_AS(hierarchical_cluster(Matrix{{1, 0}}), Error);
}

TEST_CASE("linkage matches naive agglomeration") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix d = cosine_distances(random_matrix(8, 5, rng));
    const auto fast = complete_linkage(d), slow = naive_linkage(d);
    REQUIRE(fast.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(fast[i].a == slow[i].a);
      CHECK(fast[i].b == slow[i].b);
      CHECK(fast[i].height == slow[i].height);
      CHECK(fast[i].size == slow[i].size);
    }
  }
  // exact ties resolve to the smallest id pair
  const Matrix tie{{0, 1, 1, 1}, {1, 0, 1, 1}, {1, 1, 0, 1}, {1, 1, 1, 0}};
  const auto t = complete_linkage(tie), o = naive_linkage(tie);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t[i].a == o[i].a);
    CHECK(t[i].b == o[i].b);
  }
  CHECK(t[0].a == 0);
  CHECK(t[0].b == 1);
}

TEST_CASE("cut_tree") {
  const auto merges = hierarchical_cluster(Matrix{{1, 0}, {0, 1}, {1, 0.01}, {0.01, 1}});
  CHECK(cut_tree(merges, 4, 4) == std::vector<int>{0, 1, 2, 3});
  CHECK(cut_tree(merges, 4, 2) == std::vector<int>{0, 1, 0, 1});
  CHECK(cut_tree(merges, 4, 1) == std::vector<int>{0, 0, 0, 0});
  CHECK_THROWS_AS(cut_tree(merges, 4, 5), Error);
  CHECK_THROWS_AS(cut_tree(merges, 4, 0), Error);
}

TEST_CASE("silhouette conventions") {
  const Matrix tight{{1, 0}, {1, 0.01}, {0, 1}, {0.01, 1}};
  CHECK(silhouette(tight, {0, 0, 1, 1}) > 0.9);
  CHECK(silhouette(tight, {0, 1, 2, 3}) == 0);
  CHECK_THROWS_AS(silhouette(tight, {0, 0, 0, 0}), Error);
  CHECK_THROWS_AS(silhouette(tight, {0, 1}), Error);
}

TEST_CASE("silhouette matches the double loop") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix v = random_matrix(6, 4, rng);
    std::uniform_int_distribution<int> pick(0, 2);
    std::vector<int> labels;
    do {
      labels.clear();
      for (int i = 0; i < 6; ++i) labels.push_back(pick(rng));
    } while (std::set<int>(labels.begin(), labels.end()).size() < 2);
    CHECK(std::abs(silhouette(v, labels) - naive_silhouette(cosine_distances(v), labels)) <= 1e-9);
  }
}

TEST_CASE("cosine structure is invariant to positive row scaling") {
  std::mt19937_64 rng(3);
  const Matrix v = random_matrix(8, 6, rng);
  Matrix scaled = v;
  std::uniform_real_distribution<double> c(0.1, 10);
  for (auto& r : scaled) {
    const double s = c(rng);
    for (auto& x : r) x *= s;
  }
  const auto a = hierarchical_cluster(v), b = hierarchical_cluster(scaled);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].a == b[i].a);
    CHECK(a[i].b == b[i].b);
    CHECK(std::abs(a[i].height - b[i].height) <= 1e-12);
  }
  const auto ka = select_k(v), kb = select_k(scaled);
  REQUIRE(ka.scores.size() == kb.scores.size());
  for (std::size_t i = 0; i < ka.scores.size(); ++i) CHECK(std::abs(ka.scores[i].second - kb.scores[i].second) <= 1e-12);
}

TEST_CASE("select_k on planted orthogonal groups") {
  const Matrix v{{1, 0, 0}, {1, 0.01, 0}, {0.98, 0, 0.01}, {0, 1, 0}, {0.01, 1, 0}, {0, 0.99, 0.01}};
  const KSelection s = select_k(v);
  CHECK(s.k == 2);
  CHECK(s.score > 0.9);
  CHECK(s.labels == std::vector<int>{0, 0, 0, 1, 1, 1});
}

TEST_CASE("select_k recovers three planted groups") {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix v = planted_groups(3, 4, 40, 0.05, rng);
    hits += select_k(v).k == 3;
  }
  CHECK(hits >= 9);
}

TEST_CASE("select_k picks the best silhouette in range") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 100);
    const Matrix v = random_matrix(10, 6, rng);
    const KSelection s = select_k(v, 2, 8);
    REQUIRE(s.scores.size() == 7);
    const Matrix d = cosine_distances(v);
    for (std::size_t k = 2; k <= 8; ++k) {
      const double sk = naive_silhouette(d, cut_tree(s.merges, 10, k));
      CHECK(s.score >= sk - 1e-12);
      if (k < s.k) CHECK(sk < s.score);  // ties go to the smaller k
    }
    CHECK(s.labels == cut_tree(s.merges, 10, s.k));
  }
}

TEST_CASE("select_k range handling") {
  std::mt19937_64 rng(4);
  CHECK_THROWS_AS(select_k(random_matrix(2, 3, rng)), Error);
  const KSelection s = select_k(random_matrix(4, 3, rng));
  REQUIRE(s.scores.size() == 2);  // k in {2, 3} after clamping to K-1
  CHECK(s.scores.back().first == 3);
}
