// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tensor.hpp"

namespace hl {

inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Trainable tensors plus enough context to rebuild the frozen parts.
struct Checkpoint {
  nlohmann::json config;  // effective run config
  std::size_t epoch = 0;
  std::string rng_state;
  std::map<std::string, Tensor> tensors;
};

/// Layout: version byte, u32 LE manifest length, manifest JSON
/// {config, epoch, rng_state, tensors: [{path, shape, offset}]}, then LE f32 data.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hl
