// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tensor.hpp"

namespace hl::ops {

inline constexpr real kLayerNormEps = real(1e-5);

// Matrix products go through Eigen, single-threaded; the same build gives
// bit-identical results.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
/// Adds a length-cols bias to every row.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, real s);

real silu(real x);
real silu_grad(real x);
real gelu(real x);
real gelu_grad(real x);
real sigmoid(real x);

Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);

/// Normalizes over the last axis, then applies the affine gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps = kLayerNormEps);
Tensor softmax_lastdim(const Tensor& x);

/// Numerically stable binary cross-entropy on a logit.
double bce_with_logits(double logit, int label);

}  // namespace hl::ops
