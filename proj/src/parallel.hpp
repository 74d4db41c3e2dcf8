// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hl {

/// Thread cap from HYPERLORA_THREADS; 1 when unset or invalid.
inline unsigned configured_threads() {
  const char* env = std::getenv("HYPERLORA_THREADS");
  if (!env) return 1;
  try {
    const long v = std::stol(env);
    return v >= 1 ? static_cast<unsigned>(v) : 1u;
  } catch (...) {
    return 1;
  }
}

/// Runs fn(i) for i in [0, n) over contiguous chunks. fn must only write to
/// slots owned by index i, which keeps results identical to a serial loop.
/// The first exception thrown by a worker is rethrown after the join.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t t = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  pool.reserve(t);
  for (std::size_t w = 0; w < t; ++w) {
    const std::size_t begin = n * w / t, end = n * (w + 1) / t;
    pool.emplace_back([begin, end, &fn, &error, &error_mutex] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace hl
