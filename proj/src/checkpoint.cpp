// Copyright (c) 2026, HyperLoRA contributors
// SPDX-License-Identifier: Apache-2.0

#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace hl {

using nlohmann::json;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& [path, t] : c.tensors) {
    entries.push_back({{"path", path}, {"shape", t.shape()}, {"offset", offset}});
    offset += 4 * t.size();
  }
  const json manifest{{"config", c.config}, {"epoch", c.epoch}, {"rng_state", c.rng_state}, {"tensors", entries}};
  const std::string text = manifest.dump();
  if (text.size() > 0xFFFFFFFFu) fail(ErrorKind::data, "checkpoint manifest too large");

  std::vector<std::uint8_t> out;
  out.reserve(5 + text.size() + offset);
  out.push_back(kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [path, t] : c.tensors)
    for (real v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 5) fail(ErrorKind::data, "checkpoint truncated in header");
  if (bytes[0] != kCheckpointVersion)
    fail(ErrorKind::data, "unsupported checkpoint version " + std::to_string(bytes[0]));
  const std::size_t len = get_u32(bytes.data() + 1);
  if (bytes.size() - 5 < len) fail(ErrorKind::data, "checkpoint truncated in manifest");
  const std::uint8_t* payload = bytes.data() + 5 + len;
  const std::size_t payload_size = bytes.size() - 5 - len;

  Checkpoint c;
  try {
    const json m = json::parse(bytes.begin() + 5, bytes.begin() + 5 + static_cast<std::ptrdiff_t>(len));
    c.config = m.at("config");
    c.epoch = m.at("epoch").get<std::size_t>();
    c.rng_state = m.at("rng_state").get<std::string>();
    std::uint64_t expected = 0;
    for (const auto& e : m.at("tensors")) {
      const auto path = e.at("path").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      if (shape.empty()) fail(ErrorKind::data, "checkpoint tensor '" + path + "' has no shape");
      for (std::size_t d : shape)
        if (d == 0 || d > (std::uint64_t(1) << 31)) fail(ErrorKind::data, "checkpoint tensor '" + path + "' has a bad extent");
      const std::size_t n = shape_product(shape);
      if (offset != expected) fail(ErrorKind::data, "checkpoint tensor '" + path + "' has a non-contiguous offset");
      if (offset + 4 * std::uint64_t(n) > payload_size) fail(ErrorKind::data, "checkpoint truncated in tensor data");
      std::vector<real> data(n);
      for (std::size_t i = 0; i < n; ++i)
        data[i] = static_cast<real>(std::bit_cast<float>(get_u32(payload + offset + 4 * i)));
      if (!c.tensors.emplace(path, Tensor(shape, std::move(data))).second)
        fail(ErrorKind::data, "duplicate checkpoint tensor '" + path + "'");
      expected = offset + 4 * std::uint64_t(n);
    }
    if (expected != payload_size) fail(ErrorKind::data, "checkpoint has trailing bytes");
  } catch (const json::exception& e) {
    fail(ErrorKind::data, std::string("malformed checkpoint manifest: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file(path, serialize_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::data, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::data, "cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(ErrorKind::data, "write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::data, "cannot write " + path.string());
  os << text;
  if (!os) fail(ErrorKind::data, "write failed for " + path.string());
}

}  // namespace hl
