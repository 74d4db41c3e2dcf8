// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "ops.hpp"

namespace hl::ag {

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

namespace {

Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(fn);
  }
  return Var(std::move(node));
}

bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
const Tensor& in_value(const Node& self, std::size_t i) { return self.parents[i]->value; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  return make(ops::matmul(a.value(), b.value()), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(ops::matmul_nt(self.grad, in_value(self, 1)));
    if (wants(self, 1)) self.parents[1]->accumulate(ops::matmul_tn(in_value(self, 0), self.grad));
  });
}

Var add(const Var& a, const Var& b) {
  return make(ops::add(a.value(), b.value()), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) self.parents[1]->accumulate(self.grad);
  });
}

Var add_row(const Var& x, const Var& bias) {
  return make(ops::add_row(x.value(), bias.value()), {x, bias}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) {
      const Tensor& b = in_value(self, 1);
      const std::size_t n = b.size();
      std::vector<double> acc(n, 0.0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc[i % n] += self.grad[i];
      Tensor g(b.shape());
      for (std::size_t j = 0; j < n; ++j) g[j] = static_cast<real>(acc[j]);
      self.parents[1]->accumulate(g);
    }
  });
}

Var scale(const Var& x, real s) {
  return make(ops::scale(x.value(), s), {x}, [s](Node& self) {
    self.parents[0]->accumulate(ops::scale(self.grad, s));
  });
}

Var silu(const Var& x) {
  return make(ops::silu(x.value()), {x}, [](Node& self) {
    const Tensor& in = in_value(self, 0);
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= ops::silu_grad(in[i]);
    self.parents[0]->accumulate(g);
  });
}

Var gelu(const Var& x) {
  return make(ops::gelu(x.value()), {x}, [](Node& self) {
    const Tensor& in = in_value(self, 0);
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= ops::gelu_grad(in[i]);
    self.parents[0]->accumulate(g);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta) {
  return make(ops::layer_norm(x.value(), gamma.value(), beta.value()), {x, gamma, beta}, [](Node& self) {
    const Tensor& xv = in_value(self, 0);
    const Tensor& gv = in_value(self, 1);
    const std::size_t d = xv.shape().back();
    const std::size_t rows = xv.size() / d;
    Tensor gx(xv.shape());
    std::vector<double> ggamma(d, 0.0), gbeta(d, 0.0);
    std::vector<double> xhat(d), gy(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const real* xr = xv.data().data() + r * d;
      const real* dy = self.grad.data().data() + r * d;
      double mean = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += xr[j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + ops::kLayerNormEps);
      double mean_g = 0.0, mean_gx = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        xhat[j] = (xr[j] - mean) * inv;
        gy[j] = static_cast<double>(dy[j]) * gv[j];
        mean_g += gy[j];
        mean_gx += gy[j] * xhat[j];
        ggamma[j] += static_cast<double>(dy[j]) * xhat[j];
        gbeta[j] += dy[j];
      }
      mean_g /= static_cast<double>(d);
      mean_gx /= static_cast<double>(d);
      real* out = gx.data().data() + r * d;
      for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<real>(inv * (gy[j] - mean_g - xhat[j] * mean_gx));
    }
    if (wants(self, 0)) self.parents[0]->accumulate(gx);
    if (wants(self, 1)) {
      Tensor g(gv.shape());
      for (std::size_t j = 0; j < d; ++j) g[j] = static_cast<real>(ggamma[j]);
      self.parents[1]->accumulate(g);
    }
    if (wants(self, 2)) {
      Tensor g(in_value(self, 2).shape());
      for (std::size_t j = 0; j < d; ++j) g[j] = static_cast<real>(gbeta[j]);
      self.parents[2]->accumulate(g);
    }
  });
}

Var softmax_rows(const Var& x) {
  return make(ops::softmax_lastdim(x.value()), {x}, [](Node& self) {
    const Tensor& p = self.value;
    const std::size_t d = p.shape().back();
    const std::size_t rows = p.size() / d;
    Tensor g(p.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(self.grad[r * d + j]) * p[r * d + j];
      for (std::size_t j = 0; j < d; ++j)
        g[r * d + j] = static_cast<real>(p[r * d + j] * (self.grad[r * d + j] - dot));
    }
    self.parents[0]->accumulate(g);
  });
}

Var transpose(const Var& x) {
  return make(ops::transpose(x.value()), {x}, [](Node& self) {
    self.parents[0]->accumulate(ops::transpose(self.grad));
  });
}

Var slice_cols(const Var& x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (count == 0 || start + count > n) fail(ErrorKind::usage, "slice_cols: range out of bounds");
  Tensor y({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) y(i, j) = xv(i, start + j);
  return make(std::move(y), {x}, [start, count, m, n](Node& self) {
    Tensor g({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g(i, start + j) = self.grad(i, j);
    self.parents[0]->accumulate(g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorKind::usage, "concat_cols: no inputs");
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.value().rows() != m) fail(ErrorKind::usage, "concat_cols: row counts differ");
    offsets.push_back(n);
    n += p.value().cols();
  }
  Tensor y({m, n});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) y(i, offsets[k] + j) = pv(i, j);
  }
  return make(std::move(y), parts, [offsets, m](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (!wants(self, k)) continue;
      const Tensor& pv = in_value(self, k);
      Tensor g(pv.shape());
      const std::size_t c = pv.cols();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] = self.grad(i, offsets[k] + j);
      self.parents[k]->accumulate(g);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorKind::usage, "concat_rows: no inputs");
  const std::size_t n = parts[0].value().cols();
  std::size_t m = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.value().cols() != n) fail(ErrorKind::usage, "concat_rows: column counts differ");
    offsets.push_back(m);
    m += p.value().rows();
  }
  std::vector<real> data;
  data.reserve(m * n);
  for (const auto& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return make(Tensor({m, n}, std::move(data)), parts, [offsets, n](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (!wants(self, k)) continue;
      const Tensor& pv = in_value(self, k);
      std::vector<real> g(self.grad.data().begin() + static_cast<std::ptrdiff_t>(offsets[k] * n),
                          self.grad.data().begin() + static_cast<std::ptrdiff_t>(offsets[k] * n + pv.size()));
      self.parents[k]->accumulate(Tensor(pv.shape(), std::move(g)));
    }
  });
}

Var select_row(const Var& x, std::size_t row) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (row >= m) fail(ErrorKind::usage, "select_row: index " + std::to_string(row) + " out of range");
  std::vector<real> data(xv.data().begin() + static_cast<std::ptrdiff_t>(row * n),
                         xv.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * n));
  return make(Tensor({1, n}, std::move(data)), {x}, [row, n](Node& self) {
    Tensor g(in_value(self, 0).shape());
    for (std::size_t j = 0; j < n; ++j) g[row * n + j] = self.grad[j];
    self.parents[0]->accumulate(g);
  });
}

Var repeat_rows(const Var& row, std::size_t m) {
  const Tensor& rv = row.value();
  const std::size_t n = rv.size();
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y(i, j) = rv[j];
  return make(std::move(y), {row}, [m, n](Node& self) {
    std::vector<double> acc(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) acc[j] += self.grad(i, j);
    Tensor g(in_value(self, 0).shape());
    for (std::size_t j = 0; j < n; ++j) g[j] = static_cast<real>(acc[j]);
    self.parents[0]->accumulate(g);
  });
}

Var mean(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorKind::usage, "mean: no inputs");
  const Shape& shape = parts[0].value().shape();
  std::vector<double> acc(parts[0].value().size(), 0.0);
  for (const auto& p : parts) {
    if (p.value().shape() != shape) fail(ErrorKind::usage, "mean: shapes differ");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p.value()[i];
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  Tensor y(shape);
  for (std::size_t i = 0; i < acc.size(); ++i) y[i] = static_cast<real>(acc[i] * inv);
  return make(std::move(y), parts, [inv](Node& self) {
    const Tensor g = ops::scale(self.grad, static_cast<real>(inv));
    for (std::size_t k = 0; k < self.parents.size(); ++k)
      if (wants(self, k)) self.parents[k]->accumulate(g);
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (auto v : x.value().data()) s += v;
  return make(Tensor::scalar(static_cast<real>(s)), {x}, [](Node& self) {
    self.parents[0]->accumulate(Tensor(in_value(self, 0).shape(), self.grad[0]));
  });
}

Var slice_flat(const Var& x, std::size_t offset, Shape shape) {
  const std::size_t len = shape_product(shape);
  const Tensor& xv = x.value();
  if (offset + len > xv.size()) fail(ErrorKind::usage, "slice_flat: range out of bounds");
  std::vector<real> data(xv.data().begin() + static_cast<std::ptrdiff_t>(offset),
                         xv.data().begin() + static_cast<std::ptrdiff_t>(offset + len));
  return make(Tensor(std::move(shape), std::move(data)), {x}, [offset, len](Node& self) {
    Tensor g(in_value(self, 0).shape());
    for (std::size_t i = 0; i < len; ++i) g[offset + i] = self.grad[i];
    self.parents[0]->accumulate(g);
  });
}

Var bce_with_logits(const Var& logit, int label) {
  if (logit.value().size() != 1) fail(ErrorKind::usage, "bce_with_logits: logit must be a scalar");
  const double z = logit.value()[0];
  const double loss = ops::bce_with_logits(z, label);
  return make(Tensor::scalar(static_cast<real>(loss)), {logit}, [z, label](Node& self) {
    const double g = (1.0 / (1.0 + std::exp(-z)) - label) * self.grad[0];
    self.parents[0]->accumulate(Tensor(in_value(self, 0).shape(), static_cast<real>(g)));
  });
}

Var dropout(const Var& x, real p, std::mt19937_64* rng) {
  if (rng == nullptr || p <= 0) return x;
  if (p >= 1) fail(ErrorKind::usage, "dropout: rate must be below 1");
  std::bernoulli_distribution keep(1.0 - p);
  const real s = real(1) / (real(1) - p);
  Tensor mask(x.value().shape());
  for (auto& m : mask.data()) m = keep(*rng) ? s : real(0);
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return make(std::move(y), {x}, [mask = std::move(mask)](Node& self) {
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
    self.parents[0]->accumulate(g);
  });
}

Var multi_head_attention(const Var& q, const Var& k, const Var& v, std::size_t seq_len, std::size_t num_heads) {
  const Tensor& qv = q.value();
  const std::size_t rows = qv.rows(), d = qv.cols();
  if (k.value().shape() != qv.shape() || v.value().shape() != qv.shape())
    fail(ErrorKind::usage, "attention: q, k, v shapes differ");
  if (seq_len == 0 || rows % seq_len != 0) fail(ErrorKind::usage, "attention: rows are not a multiple of seq_len");
  if (num_heads == 0 || d % num_heads != 0) fail(ErrorKind::usage, "attention: width not divisible by heads");
  const std::size_t t = seq_len, seqs = rows / t, dh = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const real* qp = qv.data().data();
  const real* kp = k.value().data().data();
  const real* vp = v.value().data().data();

  // Attention weights per (sequence, head), kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(seqs * num_heads * t * t);
  Tensor out({rows, d});
  std::vector<double> acc(dh);
  for (std::size_t s = 0; s < seqs; ++s)
    for (std::size_t h = 0; h < num_heads; ++h) {
      double* a = probs->data() + (s * num_heads + h) * t * t;
      const std::size_t r0 = s * t, c0 = h * dh;
      for (std::size_t i = 0; i < t; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < t; ++j) {
          double dot = 0;
          for (std::size_t e = 0; e < dh; ++e)
            dot += static_cast<double>(qp[(r0 + i) * d + c0 + e]) * kp[(r0 + j) * d + c0 + e];
          a[i * t + j] = dot * scale;
          mx = std::max(mx, a[i * t + j]);
        }
        double sum = 0;
        for (std::size_t j = 0; j < t; ++j) sum += (a[i * t + j] = std::exp(a[i * t + j] - mx));
        for (std::size_t j = 0; j < t; ++j) a[i * t + j] /= sum;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < t; ++j)
          for (std::size_t e = 0; e < dh; ++e) acc[e] += a[i * t + j] * vp[(r0 + j) * d + c0 + e];
        for (std::size_t e = 0; e < dh; ++e) out[(r0 + i) * d + c0 + e] = static_cast<real>(acc[e]);
      }
    }

  return make(std::move(out), {q, k, v}, [probs, t, seqs, num_heads, dh, d, scale](Node& self) {
    const Tensor& qv = in_value(self, 0);
    const Tensor& kv = in_value(self, 1);
    const Tensor& vv = in_value(self, 2);
    const std::size_t rows = qv.rows();
    std::vector<double> gq(rows * d, 0.0), gk(rows * d, 0.0), gv(rows * d, 0.0);
    std::vector<double> da(t * t);
    for (std::size_t s = 0; s < seqs; ++s)
      for (std::size_t h = 0; h < num_heads; ++h) {
        const double* a = probs->data() + (s * num_heads + h) * t * t;
        const std::size_t r0 = s * t, c0 = h * dh;
        // dA = dO·Vᵀ, dV = Aᵀ·dO
        for (std::size_t i = 0; i < t; ++i)
          for (std::size_t j = 0; j < t; ++j) {
            double dot = 0;
            for (std::size_t e = 0; e < dh; ++e)
              dot += static_cast<double>(self.grad[(r0 + i) * d + c0 + e]) * vv[(r0 + j) * d + c0 + e];
            da[i * t + j] = dot;
            for (std::size_t e = 0; e < dh; ++e) gv[(r0 + j) * d + c0 + e] += a[i * t + j] * self.grad[(r0 + i) * d + c0 + e];
          }
        // softmax backward, then the scaled score products
        for (std::size_t i = 0; i < t; ++i) {
          double inner = 0;
          for (std::size_t j = 0; j < t; ++j) inner += da[i * t + j] * a[i * t + j];
          for (std::size_t j = 0; j < t; ++j) {
            const double ds = a[i * t + j] * (da[i * t + j] - inner) * scale;
            for (std::size_t e = 0; e < dh; ++e) {
              gq[(r0 + i) * d + c0 + e] += ds * kv[(r0 + j) * d + c0 + e];
              gk[(r0 + j) * d + c0 + e] += ds * qv[(r0 + i) * d + c0 + e];
            }
          }
        }
      }
    const auto emit = [&self, rows, d](std::size_t i, const std::vector<double>& g) {
      if (!wants(self, i)) return;
      Tensor out({rows, d});
      for (std::size_t x = 0; x < g.size(); ++x) out[x] = static_cast<real>(g[x]);
      self.parents[i]->accumulate(out);
    };
    emit(0, gq);
    emit(1, gk);
    emit(2, gv);
  });
}

Var bce_sum(const Var& logits, const std::vector<int>& labels) {
  const Tensor& z = logits.value();
  if (z.size() != labels.size()) fail(ErrorKind::usage, "bce_sum: one label per logit required");
  double total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) total += ops::bce_with_logits(z[i], labels[i]);
  return make(Tensor::scalar(static_cast<real>(total)), {logits}, [labels](Node& self) {
    const Tensor& z = in_value(self, 0);
    Tensor g(z.shape());
    const double up = self.grad[0];
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
      g[i] = static_cast<real>(up * (p - labels[i]));
    }
    self.parents[0]->accumulate(g);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias, const Var& lora_b, const Var& lora_a, real lora_scale) {
  Var y = add_row(matmul(x, weight), bias);
  if (!lora_b.valid()) return y;
  return add(y, scale(matmul(matmul(x, lora_b), lora_a), lora_scale));
}

void backward(const Var& loss) {
  if (loss.value().size() != 1) fail(ErrorKind::usage, "backward: loss must be a scalar, got " + shape_str(loss.value().shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed order is a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Tensor(loss.value().shape(), real(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace hl::ag
