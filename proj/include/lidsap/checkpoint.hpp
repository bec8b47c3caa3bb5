// Copyright 2026 The lidsap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint layout (all integers little-endian):
//
//   "LIDK"            4 bytes magic
//   version           u32
//   header_length     u64
//   header            UTF-8 JSON: {"model": ModelConfig, "tensors": [{name, shape}],
//                                  "train_state": {...} | null}
//   blobs             float32 LE, one per header tensor, in header order

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lidsap/config_io.hpp"
#include "lidsap/model.hpp"

namespace lidsap {

inline constexpr char kCheckpointMagic[4] = {'L', 'I', 'D', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kVersion, kTruncated, kStructure, kIncompatible };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct LoadedCheckpoint {
  Model<float> model;
  json train_state;  // null when the file holds weights only
};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

inline std::vector<std::uint8_t> serialize_checkpoint(const Model<float>& m, const json& train_state = nullptr) {
  json tensors = json::array();
  std::size_t blob_bytes = 0;
  visit_tensors(m, [&](const std::string& name, const Tensor<float>& t, bool) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}});
    blob_bytes += t.size() * sizeof(float);
  });
  const json header = {{"model", m.config}, {"tensors", tensors}, {"train_state", train_state}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + blob_bytes);
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 4);
  auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  };
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t header_len = text.size();
  put(&version, 4);
  put(&header_len, 8);
  put(text.data(), text.size());
  visit_tensors(m, [&](const std::string&, const Tensor<float>& t, bool) {
    put(t.data().data(), t.size() * sizeof(float));
  });
  return out;
}

/// Parses and validates a checkpoint. When `expected` is given, the embedded
/// model config must match it exactly.
inline LoadedCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes,
                                               const ModelConfig* expected = nullptr) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < 16) throw CheckpointError(Kind::kTruncated, "checkpoint shorter than its fixed header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError(Kind::kBadMagic, "not a checkpoint (bad magic)");
  }
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&header_len, bytes.data() + 8, 8);
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::kVersion, "checkpoint version " + std::to_string(version) +
                                              " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (header_len > bytes.size() - 16) {
    throw CheckpointError(Kind::kTruncated, "header length " + std::to_string(header_len) + " exceeds file size");
  }
  json header;
  ModelConfig cfg;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    cfg = header.at("model").get<ModelConfig>();
    cfg.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::kStructure, std::string("bad checkpoint header: ") + e.what());
  }
  if (expected && !(*expected == cfg)) {
    throw CheckpointError(Kind::kIncompatible, "checkpoint model config does not match the requested config");
  }

  Model<float> m = allocate_model<float>(cfg);
  std::vector<std::pair<std::string, Tensor<float>*>> slots;
  visit_tensors(m, [&](const std::string& name, Tensor<float>& t, bool) { slots.emplace_back(name, &t); });
  const json& listed = header.contains("tensors") ? header["tensors"] : json();
  if (!listed.is_array() || listed.size() != slots.size()) {
    throw CheckpointError(Kind::kStructure, "tensor list does not match the model config");
  }
  std::size_t offset = 16 + header_len;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Shape shape;
    std::string name;
    try {
      name = listed[i].at("name").get<std::string>();
      shape = listed[i].at("shape").get<Shape>();
    } catch (const std::exception& e) {
      throw CheckpointError(Kind::kStructure, std::string("bad tensor entry: ") + e.what());
    }
    if (name != slots[i].first || shape != slots[i].second->shape()) {
      throw CheckpointError(Kind::kStructure, "tensor " + std::to_string(i) + " ('" + name + "' " +
                                                  shape_string(shape) + ") does not match expected '" +
                                                  slots[i].first + "' " + shape_string(slots[i].second->shape()));
    }
    const std::size_t n = slots[i].second->size() * sizeof(float);
    if (offset + n > bytes.size()) throw CheckpointError(Kind::kTruncated, "blob for '" + name + "' is truncated");
    std::memcpy(slots[i].second->data().data(), bytes.data() + offset, n);
    offset += n;
  }
  if (offset != bytes.size()) {
    throw CheckpointError(Kind::kStructure, "trailing bytes after the last tensor blob");
  }
  for (const auto& [name, t] : slots) {
    if (!t->all_finite()) throw CheckpointError(Kind::kStructure, "non-finite values in '" + name + "'");
  }
  return {std::move(m), header.value("train_state", json())};
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline void save_checkpoint(const std::filesystem::path& path, const Model<float>& m,
                            const json& train_state = nullptr) {
  write_file_atomic(path, serialize_checkpoint(m, train_state));
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes, expected);
}

}  // namespace lidsap
