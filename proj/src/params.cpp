// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "params.hpp"

#include <cmath>

namespace hl {

const ag::Var& ParamStore::add(const std::string& path, Tensor value, bool trainable) {
  if (entries_.count(path)) fail(ErrorKind::usage, "duplicate parameter path '" + path + "'");
  auto& e = entries_[path];
  e.var = ag::Var(std::move(value), trainable);
  e.trainable = trainable;
  return e.var;
}

const ag::Var& ParamStore::get(const std::string& path) const {
  auto it = entries_.find(path);
  if (it == entries_.end()) fail(ErrorKind::usage, "unknown parameter path '" + path + "'");
  return it->second.var;
}

void ParamStore::merge(const ParamStore& other) {
  for (const auto& [path, e] : other.entries_) {
    if (entries_.count(path)) fail(ErrorKind::usage, "duplicate parameter path '" + path + "'");
    entries_[path] = e;
  }
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [path, e] : entries_) out.add(path, e.var.value(), e.trainable);
  return out;
}

std::vector<std::string> ParamStore::trainable_paths() const {
  std::vector<std::string> out;
  for (const auto& [path, e] : entries_)
    if (e.trainable) out.push_back(path);
  return out;
}

std::size_t ParamStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& [path, e] : entries_)
    if (e.trainable || !trainable_only) n += e.var.value().size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [path, e] : entries_) e.var.zero_grad();
}

GradMap ParamStore::gradients() const {
  GradMap out;
  for (const auto& [path, e] : entries_)
    if (e.trainable && e.var.has_grad()) out.emplace(path, e.var.grad());
  return out;
}

Tensor truncated_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.data()) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    v = static_cast<real>(z * stddev);
  }
  return t;
}

Tensor normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = static_cast<real>(dist(rng));
  return t;
}

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = static_cast<real>(dist(rng));
  return t;
}

}  // namespace hl
