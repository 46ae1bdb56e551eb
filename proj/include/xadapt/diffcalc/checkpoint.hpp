// Copyright 2026 The xadapt Authors. All Rights Reserved.
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

// Checkpoint container layout (all integers little-endian):
//
//   bytes 0..7    magic "XADPCKPT"
//   bytes 8..11   uint32 format version (1)
//   bytes 12..19  uint64 length L of the JSON index
//   next L bytes  JSON index: {"format": "xadapt-checkpoint", "version": 1,
//                 "metadata": {...}, "tensors": [{"name", "partition",
//                 "shape", "offset", "count"}, ...]}
//   remainder     float64 payloads, little-endian, in index order; "offset"
//                 is the byte offset of a tensor from the start of the payload.

#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xadapt/diffcalc/params.hpp"

namespace xadapt::dc {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

struct CheckpointTensor {
  std::string name;
  std::string partition;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  static constexpr std::string_view kMagic = "XADPCKPT";
  static constexpr std::uint32_t kVersion = 1;

  std::vector<CheckpointTensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();

  /// Captures the listed partitions (all partitions when empty).
  static Checkpoint from_params(const ParamSet<double>& params,
                                const std::set<std::string>& partitions = {}) {
    Checkpoint ck;
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& e : params.entries()) {
      if (!partitions.empty() && !partitions.contains(e.partition)) continue;
      ck.tensors.push_back({e.name, e.partition, e.tensor.shape(),
                            std::vector<double>(e.tensor.values().begin(), e.tensor.values().end())});
    }
    for (const auto& p : params.partitions())
      if (partitions.empty() || partitions.contains(p)) parts.push_back(p);
    ck.metadata["partitions"] = parts;
    return ck;
  }

  /// Overwrites matching parameters and adds missing ones.
  void apply_to(ParamSet<double>& params) const {
    for (const auto& t : tensors) {
      if (params.contains(t.name)) {
        auto& dst = params.get(t.name);
        if (dst.shape() != t.shape) throw ShapeError("checkpoint " + t.name, dst.shape(), t.shape);
        std::copy(t.values.begin(), t.values.end(), dst.mutable_values().begin());
      } else {
        params.add(t.name, t.partition, Tensor<double>(t.shape, t.values));
      }
    }
  }

  std::set<std::string> partitions() const {
    std::set<std::string> out;
    for (const auto& t : tensors) out.insert(t.partition);
    return out;
  }

  std::string serialize() const {
    nlohmann::json index;
    index["format"] = "xadapt-checkpoint";
    index["version"] = kVersion;
    index["metadata"] = metadata;
    index["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : tensors) {
      if (numel(t.shape) != t.values.size())
        throw CheckpointError("checkpoint: tensor '" + t.name + "' has inconsistent shape");
      index["tensors"].push_back({{"name", t.name},
                                  {"partition", t.partition},
                                  {"shape", t.shape},
                                  {"offset", offset},
                                  {"count", t.values.size()}});
      offset += t.values.size() * 8;
    }
    const std::string header = index.dump();
    std::string out;
    out.reserve(20 + header.size() + offset);
    out.append(kMagic);
    put_le(out, kVersion, 4);
    put_le(out, header.size(), 8);
    out.append(header);
    for (const auto& t : tensors)
      for (double v : t.values) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    return out;
  }

  static Checkpoint parse(std::string_view bytes) {
    if (bytes.size() < 20 || bytes.substr(0, 8) != kMagic)
      throw CheckpointError("checkpoint: bad magic");
    const auto version = get_le(bytes, 8, 4);
    if (version != kVersion)
      throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    const auto header_len = get_le(bytes, 12, 8);
    if (20 + header_len > bytes.size()) throw CheckpointError("checkpoint: truncated index");
    nlohmann::json index;
    try {
      index = nlohmann::json::parse(bytes.substr(20, header_len));
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("checkpoint: malformed index: ") + e.what());
    }
    Checkpoint ck;
    ck.metadata = index.value("metadata", nlohmann::json::object());
    const std::size_t payload = 20 + header_len;
    for (const auto& j : index.at("tensors")) {
      CheckpointTensor t;
      t.name = j.at("name").get<std::string>();
      t.partition = j.at("partition").get<std::string>();
      t.shape = j.at("shape").get<Shape>();
      const auto offset = j.at("offset").get<std::uint64_t>();
      const auto count = j.at("count").get<std::uint64_t>();
      if (count != numel(t.shape)) throw CheckpointError("checkpoint: count/shape mismatch for " + t.name);
      if (payload + offset + count * 8 > bytes.size())
        throw CheckpointError("checkpoint: truncated payload for " + t.name);
      t.values.resize(count);
      for (std::size_t i = 0; i < count; ++i)
        t.values[i] = std::bit_cast<double>(get_le(bytes, payload + offset + i * 8, 8));
      ck.tensors.push_back(std::move(t));
    }
    return ck;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("checkpoint: cannot write " + path);
    const std::string bytes = serialize();
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot read " + path);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse(bytes);
  }

 private:
  static void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  static std::uint64_t get_le(std::string_view in, std::size_t at, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
  }
};

}  // namespace xadapt::dc
