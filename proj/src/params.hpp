// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "autograd.hpp"

namespace hl {

using GradMap = std::map<std::string, Tensor>;

/// Named parameter tensors. Frozen entries are constants on the tape, so no
/// gradient can ever reach them.
class ParamStore {
 public:
  struct Entry {
    ag::Var var;
    bool trainable = false;
  };

  const ag::Var& add(const std::string& path, Tensor value, bool trainable);
  const ag::Var& get(const std::string& path) const;
  bool contains(const std::string& path) const { return entries_.count(path) != 0; }
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

  /// Shares the other store's nodes; paths must not collide.
  void merge(const ParamStore& other);
  /// Deep copy with fresh nodes.
  ParamStore clone() const;

  std::vector<std::string> trainable_paths() const;
  std::size_t scalar_count(bool trainable_only) const;
  void zero_grads();
  /// Gradients of trainable entries that the last backward sweep reached.
  GradMap gradients() const;

 private:
  std::map<std::string, Entry> entries_;
};

// Initializers.
Tensor truncated_normal(Shape shape, double stddev, std::mt19937_64& rng);
Tensor normal(Shape shape, double stddev, std::mt19937_64& rng);
Tensor uniform(Shape shape, double bound, std::mt19937_64& rng);

}  // namespace hl
