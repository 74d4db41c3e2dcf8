// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "lora.hpp"

#include "ops.hpp"

namespace hl {
namespace {

void check_factors(const LoraFactors& f) {
  if (f.rank == 0) fail(ErrorKind::usage, "LoRA rank must be at least 1");
  if (f.b.rank() != 2 || f.a.rank() != 2 || f.b.cols() != f.rank || f.a.rows() != f.rank)
    fail(ErrorKind::usage, "LoRA factor shapes " + shape_str(f.b.shape()) + " / " + shape_str(f.a.shape()) +
                               " do not match rank " + std::to_string(f.rank));
}

}  // namespace

Tensor apply_delta(const Tensor& x, const Tensor& weight, const Tensor& bias, const LoraFactors& f) {
  check_factors(f);
  if (f.b.rows() != weight.rows() || f.a.cols() != weight.cols())
    fail(ErrorKind::usage, "LoRA factors " + shape_str(f.b.shape()) + " / " + shape_str(f.a.shape()) +
                               " do not fit weight " + shape_str(weight.shape()));
  Tensor y = ops::add_row(ops::matmul(x, weight), bias);
  const Tensor side = ops::matmul(ops::matmul(x, f.b), f.a);
  const real s = f.scale();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * side[i];
  return y;
}

Tensor materialize(const LoraFactors& f) {
  check_factors(f);
  return ops::scale(ops::matmul(f.b, f.a), f.scale());
}

DeltaVars as_constants(const DeltaSet& deltas) {
  DeltaVars out;
  for (const auto& [m, f] : deltas) {
    check_factors(f);
    out.emplace(m, LoraVars{ag::Var::constant(f.b), ag::Var::constant(f.a), f.scale()});
  }
  return out;
}

}  // namespace hl
