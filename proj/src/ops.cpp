// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "ops.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace hl::ops {
namespace {

std::size_t last_dim(const Tensor& x) { return x.shape().back(); }

void require(bool ok, const char* what) {
  if (!ok) fail(ErrorKind::usage, what);
}

using MatrixR = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const MatrixR>;
using MapM = Eigen::Map<MatrixR>;

MapC view(const Tensor& t, std::size_t rows, std::size_t cols) {
  return MapC(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MapM view(Tensor& t, std::size_t rows, std::size_t cols) {
  return MapM(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) fail(ErrorKind::usage, "matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out({m, n});
  view(out, m, n).noalias() = view(a, m, k) * view(b, k, n);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    fail(ErrorKind::usage,
         "matmul_nt: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  Tensor out({m, n});
  view(out, m, n).noalias() = view(a, m, k) * view(b, n, k).transpose();
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k)
    fail(ErrorKind::usage,
         "matmul_tn: inner extents differ " + shape_str(a.shape()) + "^T x " + shape_str(b.shape()));
  Tensor out({m, n});
  view(out, m, n).noalias() = view(a, k, m).transpose() * view(b, k, n);
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor t({n, m});
  const real* src = a.data().data();
  real* dst = t.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    fail(ErrorKind::usage, "add: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.cols();
  if (bias.size() != n)
    fail(ErrorKind::usage, "add_row: bias length " + std::to_string(bias.size()) + " vs " + std::to_string(n));
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias[i % n];
  return y;
}

Tensor scale(const Tensor& x, real s) {
  Tensor y = x;
  for (auto& v : y.data()) v *= s;
  return y;
}

real sigmoid(real x) {
  if (x >= 0) return real(1) / (real(1) + std::exp(-x));
  const real e = std::exp(x);
  return e / (real(1) + e);
}

real silu(real x) { return x * sigmoid(x); }

real silu_grad(real x) {
  const real s = sigmoid(x);
  return s * (real(1) + x * (real(1) - s));
}

real gelu(real x) {
  const double xd = x;
  return static_cast<real>(0.5 * xd * (1.0 + std::erf(xd / std::numbers::sqrt2)));
}

real gelu_grad(real x) {
  const double xd = x;
  const double cdf = 0.5 * (1.0 + std::erf(xd / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * std::numbers::pi);
  return static_cast<real>(cdf + xd * pdf);
}

Tensor silu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = silu(v);
  return y;
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = gelu(v);
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
  const std::size_t d = x.empty() ? 0 : last_dim(x);
  require(d > 0, "layer_norm: empty last axis");
  require(gamma.size() == d && beta.size() == d, "layer_norm: affine length mismatch");
  require(eps > 0, "layer_norm: eps must be positive");
  Tensor y(x.shape());
  const std::size_t rows = x.size() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const real* xr = x.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    real* yr = y.data().data() + r * d;
    for (std::size_t j = 0; j < d; ++j)
      yr[j] = static_cast<real>((xr[j] - mean) * inv * gamma[j] + beta[j]);
  }
  return y;
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t d = last_dim(x);
  Tensor y(x.shape());
  const std::size_t rows = x.size() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const real* xr = x.data().data() + r * d;
    real mx = xr[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    std::vector<double> e(d);
    for (std::size_t j = 0; j < d; ++j) {
      e[j] = std::exp(static_cast<double>(xr[j]) - mx);
      sum += e[j];
    }
    real* yr = y.data().data() + r * d;
    for (std::size_t j = 0; j < d; ++j) yr[j] = static_cast<real>(e[j] / sum);
  }
  return y;
}

double bce_with_logits(double logit, int label) {
  if (label != 0 && label != 1) fail(ErrorKind::usage, "bce_with_logits: label must be 0 or 1");
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

}  // namespace hl::ops
