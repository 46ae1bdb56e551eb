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

#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "xadapt/diffcalc/tensor.hpp"

namespace xadapt {

/// Partition names used throughout the library.
namespace partition {
inline constexpr const char* kBackbone = "backbone";
inline constexpr const char* kFusion = "fusion";
inline std::string head(const std::string& lang) { return "head:" + lang; }
inline std::string adapter(const std::string& lang) { return "adapter:" + lang; }
}  // namespace partition

/// FNV-1a over raw bytes. Used for bitwise freeze audits.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes,
                           std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

/// Named parameter store where every tensor belongs to exactly one partition
/// and partitions carry freeze flags.
///
/// Entries keep insertion order, so flattening and checksums are stable.
/// Copies share tensor storage; clone() gives independent values.
template <std::floating_point T>
class ParamSet {
 public:
  using value_type = T;

  struct Entry {
    std::string name;
    std::string partition;
    dc::Tensor<T> tensor;
  };

  dc::Tensor<T>& add(const std::string& name, const std::string& partition,
                     dc::Tensor<T> tensor) {
    if (index_.contains(name)) throw Error("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    tensor.set_requires_grad(!frozen(partition));
    entries_.push_back({name, partition, std::move(tensor)});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  dc::Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return entries_[it->second].tensor;
  }
  const dc::Tensor<T>& get(const std::string& name) const {
    return const_cast<ParamSet*>(this)->get(name);
  }
  const std::string& partition_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return entries_[it->second].partition;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  std::vector<std::string> partitions() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& e : entries_)
      if (seen.insert(e.partition).second) out.push_back(e.partition);
    return out;
  }

  bool has_partition(const std::string& p) const {
    for (const auto& e : entries_)
      if (e.partition == p) return true;
    return false;
  }

  void freeze(const std::string& partition, bool on = true) {
    if (on)
      frozen_.insert(partition);
    else
      frozen_.erase(partition);
    for (auto& e : entries_)
      if (e.partition == partition) e.tensor.set_requires_grad(!on);
  }
  bool frozen(const std::string& partition) const { return frozen_.contains(partition); }

  /// Freezes every partition except the listed ones.
  void train_only(const std::set<std::string>& trainable) {
    for (const auto& p : partitions()) freeze(p, !trainable.contains(p));
  }
  void freeze_all() { train_only({}); }

  std::set<std::string> trainable_partitions() const {
    std::set<std::string> out;
    for (const auto& p : partitions())
      if (!frozen(p)) out.insert(p);
    return out;
  }

  std::size_t count(const std::string& partition) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.partition == partition) n += e.tensor.size();
    return n;
  }
  std::size_t count_all() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  /// Bitwise checksum of every value in a partition.
  std::uint64_t checksum(const std::string& partition) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& e : entries_) {
      if (e.partition != partition) continue;
      h = fnv1a(e.name.data(), e.name.size(), h);
      h = fnv1a(e.tensor.values().data(), e.tensor.size() * sizeof(T), h);
    }
    return h;
  }
  std::map<std::string, std::uint64_t> checksums() const {
    std::map<std::string, std::uint64_t> out;
    for (const auto& p : partitions()) out[p] = checksum(p);
    return out;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Flattened values of a partition, in entry order.
  std::vector<T> snapshot(const std::string& partition) const {
    std::vector<T> out;
    for (const auto& e : entries_)
      if (e.partition == partition)
        out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
    return out;
  }
  void restore(const std::string& partition, std::span<const T> values) {
    std::size_t off = 0;
    for (auto& e : entries_) {
      if (e.partition != partition) continue;
      auto dst = e.tensor.mutable_values();
      if (off + dst.size() > values.size()) throw Error("restore: snapshot too short for " + partition);
      std::copy_n(values.begin() + off, dst.size(), dst.begin());
      off += dst.size();
    }
    if (off != values.size()) throw Error("restore: snapshot size mismatch for " + partition);
  }
  /// Flattened gradient of a partition (zeros where no gradient reached).
  std::vector<T> gradient(const std::string& partition) const {
    std::vector<T> out;
    for (const auto& e : entries_) {
      if (e.partition != partition) continue;
      if (e.tensor.has_grad())
        out.insert(out.end(), e.tensor.grad().begin(), e.tensor.grad().end());
      else
        out.insert(out.end(), e.tensor.size(), T(0));
    }
    return out;
  }

  /// Copies every entry of a partition from another set, renaming on the fly.
  /// Used to seed a fresh adapter or head from a checkpointed one.
  void copy_partition(const ParamSet& src, const std::string& from_partition,
                      const std::string& to_partition, const std::string& from_prefix,
                      const std::string& to_prefix) {
    const std::vector<Entry> from = src.entries_;  // src may alias *this
    for (const auto& e : from) {
      if (e.partition != from_partition) continue;
      std::string name = e.name;
      if (name.rfind(from_prefix, 0) != 0) throw Error("copy_partition: unexpected name " + name);
      name = to_prefix + name.substr(from_prefix.size());
      if (contains(name))
        std::copy(e.tensor.values().begin(), e.tensor.values().end(),
                  get(name).mutable_values().begin());
      else
        add(name, to_partition, e.tensor.clone());
    }
  }

  /// Reassigns every parameter whose name starts with `prefix`.
  void move_to_partition(const std::string& prefix, const std::string& partition) {
    std::size_t moved = 0;
    for (auto& e : entries_)
      if (e.name.rfind(prefix, 0) == 0) {
        e.partition = partition;
        e.tensor.set_requires_grad(!frozen(partition));
        ++moved;
      }
    if (moved == 0) throw Error("move_to_partition: no parameter starts with '" + prefix + "'");
  }

  void erase_partition(const std::string& partition) {
    std::vector<Entry> kept;
    for (auto& e : entries_)
      if (e.partition != partition) kept.push_back(std::move(e));
    entries_ = std::move(kept);
    index_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].name] = i;
    frozen_.erase(partition);
  }

  ParamSet clone() const {
    ParamSet out;
    out.frozen_ = frozen_;
    for (const auto& e : entries_) out.add(e.name, e.partition, e.tensor.clone());
    return out;
  }

  template <std::floating_point U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : frozen_) out.freeze(p);
    for (const auto& e : entries_) out.add(e.name, e.partition, e.tensor.template cast<U>());
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::set<std::string> frozen_;
};

}  // namespace xadapt
