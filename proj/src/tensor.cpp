// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hl {

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape shape, real fill) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {
  for (auto e : shape_)
    if (e == 0) fail(ErrorKind::usage, "tensor extents must be positive, got " + shape_str(shape_));
}

Tensor::Tensor(Shape shape, std::vector<real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_)
    if (e == 0) fail(ErrorKind::usage, "tensor extents must be positive, got " + shape_str(shape_));
  if (shape_product(shape_) != data_.size())
    fail(ErrorKind::usage, "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                               shape_str(shape_));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<real> values) {
  return Tensor({rows, cols}, std::vector<real>(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() != 2) fail(ErrorKind::usage, "expected a matrix, got shape " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() != 2) fail(ErrorKind::usage, "expected a matrix, got shape " + shape_str(shape_));
  return shape_[1];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size())
    fail(ErrorKind::usage, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](real v) { return std::isfinite(v); });
}

void Tensor::fill(real value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace hl
