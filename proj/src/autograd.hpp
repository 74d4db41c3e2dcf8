// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace hl::ag {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Tensor& g);
};

/// Handle to a node of a reverse-mode tape. Copies share the node.
class Var {
 public:
  Var() = default;
  Var(Tensor value, bool requires_grad);

  static Var constant(Tensor value) { return Var(std::move(value), false); }
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad = Tensor(); }
  bool valid() const { return node_ != nullptr; }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var add_row(const Var& x, const Var& bias);
Var scale(const Var& x, real s);
Var silu(const Var& x);
Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta);
Var softmax_rows(const Var& x);
Var transpose(const Var& x);
Var slice_cols(const Var& x, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var select_row(const Var& x, std::size_t row);
/// Stacks a single row m times.
Var repeat_rows(const Var& row, std::size_t m);
Var mean(const std::vector<Var>& parts);
Var sum(const Var& x);
/// Contiguous segment of the flattened tensor, reshaped.
Var slice_flat(const Var& x, std::size_t offset, Shape shape);
Var bce_with_logits(const Var& logit, int label);
/// Inverted dropout; identity when rng is null or p == 0.
Var dropout(const Var& x, real p, std::mt19937_64* rng);

/// Scaled dot-product attention over stacked sequences. Rows [s·T, (s+1)·T)
/// form sequence s; columns split evenly into heads.
Var multi_head_attention(const Var& q, const Var& k, const Var& v, std::size_t seq_len, std::size_t num_heads);

/// Sum of per-row BCE for an n×1 (or length-n) logit column.
Var bce_sum(const Var& logits, const std::vector<int>& labels);

/// y = x·W + b, plus the scaled low-rank side path (x·B)·A when lora_b is valid.
Var linear(const Var& x, const Var& weight, const Var& bias, const Var& lora_b = {}, const Var& lora_a = {},
           real lora_scale = 1);

/// Reverse sweep from a scalar loss; gradients accumulate on every reachable node that requires them.
void backward(const Var& loss);

}  // namespace hl::ag
