// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>

#include "autograd.hpp"

namespace hl {

/// One generated low-rank pair for a single module: ΔW = B·A with B d_in×r, A r×d_out.
struct LoraFactors {
  Tensor b;
  Tensor a;
  std::size_t rank = 0;
  real alpha = 0;

  real scale() const { return alpha / static_cast<real>(rank); }
};

/// Keyed by module flat index.
using DeltaSet = std::map<std::size_t, LoraFactors>;

/// Differentiable counterpart of LoraFactors.
struct LoraVars {
  ag::Var b;
  ag::Var a;
  real scale = 1;
};
using DeltaVars = std::map<std::size_t, LoraVars>;

/// y = x·W + bias + (α/r)·(x·B)·A without forming the d_in×d_out delta.
Tensor apply_delta(const Tensor& x, const Tensor& weight, const Tensor& bias, const LoraFactors& f);

/// Dense (α/r)·B·A.
Tensor materialize(const LoraFactors& f);

DeltaVars as_constants(const DeltaSet& deltas);

}  // namespace hl
