// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "lora.hpp"

namespace hl::analysis {

enum class FlattenMode { factors, materialized };
const char* to_string(FlattenMode mode);
FlattenMode flatten_mode_from_string(const std::string& s);

/// Modules in ascending flat index; factors mode emits B then A row-major,
/// materialized mode emits (α/r)·B·A row-major.
std::vector<double> flatten_lora(const DeltaSet& deltas, FlattenMode mode);

/// Rows are observations. Stored in double for the spectral routines.
using Matrix = std::vector<std::vector<double>>;
using Coords = std::vector<std::array<double, 2>>;

struct Pca2d {
  Coords coords;
  std::array<double, 2> explained{0, 0};  // variance ratios, descending
};

/// Top-2 principal coordinates via the K×K Gram matrix of centered rows. Each
/// component's feature-space loading has a positive first nonzero entry.
Pca2d pca_2d(const Matrix& v);

/// Classical (Torgerson) scaling of a symmetric zero-diagonal distance matrix.
/// Each coordinate column has a positive first nonzero entry.
Coords mds_2d(const Matrix& distances);

/// 1 - cos(a, b); rows must have nonzero norm.
Matrix cosine_distances(const Matrix& v);

/// One agglomeration step. Leaves are 0..K-1; merge i creates cluster K+i.
struct Merge {
  std::size_t a = 0;
  std::size_t b = 0;
  double height = 0;
  std::size_t size = 0;
};

/// Complete linkage over a precomputed distance matrix. Ties go to the
/// smallest (a, b) cluster-id pair.
std::vector<Merge> complete_linkage(const Matrix& distances);
std::vector<Merge> hierarchical_cluster(const Matrix& v);

/// Flat labels after undoing all but the last k-1 merges. Label order follows
/// each cluster's smallest member.
std::vector<int> cut_tree(const std::vector<Merge>& merges, std::size_t n, std::size_t k);

double silhouette_from_distances(const Matrix& distances, const std::vector<int>& labels);
double silhouette(const Matrix& v, const std::vector<int>& labels);

struct KSelection {
  std::size_t k = 0;
  double score = 0;
  std::vector<int> labels;
  std::vector<std::pair<std::size_t, double>> scores;  // every k tried
  std::vector<Merge> merges;
};

/// Argmax silhouette over k in [k_min, min(k_max, K-1)], ties to the smaller k.
KSelection select_k(const Matrix& v, std::size_t k_min = 2, std::size_t k_max = 8);

}  // namespace hl::analysis
