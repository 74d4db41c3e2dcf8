// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hl {

#ifdef HL_USE_DOUBLE
using real = double;
#else
using real = float;
#endif

/// Error classes map one-to-one onto the process exit codes of the CLI.
enum class ErrorKind { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

/// Dense row-major array of reals with shape metadata.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = real(0));
  Tensor(Shape shape, std::vector<real> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<real> values);
  static Tensor scalar(real value) { return Tensor({1}, std::vector<real>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // 2-D accessors; a rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<real> data() noexcept { return data_; }
  std::span<const real> data() const noexcept { return data_; }
  std::vector<real>& storage() noexcept { return data_; }
  const std::vector<real>& storage() const noexcept { return data_; }

  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }
  real& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  real operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;
  void fill(real value);

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<real> data_;
};

std::size_t shape_product(const Shape& shape);

}  // namespace hl
