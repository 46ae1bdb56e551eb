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

#include <map>
#include <set>
#include <string>
#include <vector>

#include "xadapt/diffcalc/params.hpp"

namespace xadapt::adapters {

/// A parameter described by shape only, for models too large to allocate.
struct ShapeEntry {
  std::string name;
  std::string partition;
  dc::Shape shape;
};
using Inventory = std::vector<ShapeEntry>;

inline Inventory inventory_of(const ParamSet<double>& ps) {
  Inventory out;
  for (const auto& e : ps.entries()) out.push_back({e.name, e.partition, e.tensor.shape()});
  return out;
}

inline std::size_t count(const Inventory& inv, const std::string& partition) {
  std::size_t n = 0;
  for (const auto& e : inv)
    if (e.partition == partition) n += dc::numel(e.shape);
  return n;
}

inline std::size_t count_all(const Inventory& inv) {
  std::size_t n = 0;
  for (const auto& e : inv) n += dc::numel(e.shape);
  return n;
}

/// Single-language model size: backbone (including any "backbone:<part>"
/// split) plus that language's head.
inline std::size_t full_model_count(const Inventory& inv, const std::string& lang) {
  const std::string split = std::string(partition::kBackbone) + ":";
  std::size_t n = count(inv, partition::head(lang));
  for (const auto& e : inv)
    if (e.partition == partition::kBackbone || e.partition.starts_with(split)) n += dc::numel(e.shape);
  return n;
}

struct TrainableTable {
  struct Row {
    std::string partition;
    std::size_t count = 0;
    bool trainable = false;
  };
  std::vector<Row> rows;
  std::size_t trainable = 0;
  std::size_t full = 0;

  double ratio() const { return full == 0 ? 0.0 : double(trainable) / double(full); }
};

/// Per-partition counts, with `active` marking the trainable ones.
inline TrainableTable count_trainable(const Inventory& inv, const std::set<std::string>& active,
                                      std::size_t full) {
  TrainableTable t;
  t.full = full;
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& e : inv) {
    if (!counts.contains(e.partition)) order.push_back(e.partition);
    counts[e.partition] += dc::numel(e.shape);
  }
  for (const auto& p : order) {
    const bool on = active.contains(p);
    t.rows.push_back({p, counts[p], on});
    if (on) t.trainable += counts[p];
  }
  return t;
}

/// Reference full-size architecture: a two-convolution front end, 12
/// encoder and 6 decoder layers, width 256, 4 heads, 2048 feed-forward units,
/// a 100-entry output vocabulary and 83-dimensional input features.
struct ReferenceArch {
  std::size_t model_dim = 256;
  std::size_t ff_dim = 2048;
  std::size_t encoder_layers = 12;
  std::size_t decoder_layers = 6;
  std::size_t vocab = 100;
  std::size_t feature_dim = 83;
  std::size_t conv_kernel = 3;
  std::size_t adapter_bottleneck = 64;
};

namespace detail {

inline void linear(Inventory& inv, const std::string& name, const std::string& part,
                   std::size_t in, std::size_t out, bool bias = true) {
  inv.push_back({name + ".w", part, {in, out}});
  if (bias) inv.push_back({name + ".b", part, {out}});
}

inline void norm(Inventory& inv, const std::string& name, const std::string& part, std::size_t d) {
  inv.push_back({name + ".g", part, {d}});
  inv.push_back({name + ".b", part, {d}});
}

inline void attention(Inventory& inv, const std::string& name, const std::string& part,
                      std::size_t d) {
  for (const char* n : {".q", ".k", ".v", ".o"}) linear(inv, name + n, part, d, d);
}

}  // namespace detail

/// Shapes of the reference model with one language's head, adapters and
/// fusion blocks on every layer.
inline Inventory reference_inventory(const ReferenceArch& a, const std::string& lang) {
  Inventory inv;
  const std::string bb = partition::kBackbone;
  const std::size_t d = a.model_dim, k = a.conv_kernel;
  // Two stride-2 convolutions, then a projection of the flattened channels.
  inv.push_back({"backbone.conv1.w", bb, {d, 1, k, k}});
  inv.push_back({"backbone.conv1.b", bb, {d}});
  inv.push_back({"backbone.conv2.w", bb, {d, d, k, k}});
  inv.push_back({"backbone.conv2.b", bb, {d}});
  const std::size_t f1 = (a.feature_dim - k) / 2 + 1, f2 = (f1 - k) / 2 + 1;
  detail::linear(inv, "backbone.sub", bb, d * f2, d);
  for (std::size_t l = 0; l < a.encoder_layers; ++l) {
    const std::string p = "backbone.enc." + std::to_string(l);
    detail::norm(inv, p + ".ln_attn", bb, d);
    detail::norm(inv, p + ".ln_ff", bb, d);
    detail::attention(inv, p + ".attn", bb, d);
    detail::linear(inv, p + ".ff.in", bb, d, a.ff_dim);
    detail::linear(inv, p + ".ff.out", bb, a.ff_dim, d);
  }
  detail::norm(inv, "backbone.enc_norm", bb, d);
  for (std::size_t l = 0; l < a.decoder_layers; ++l) {
    const std::string p = "backbone.dec." + std::to_string(l);
    detail::norm(inv, p + ".ln_self", bb, d);
    detail::norm(inv, p + ".ln_cross", bb, d);
    detail::norm(inv, p + ".ln_ff", bb, d);
    detail::attention(inv, p + ".self_attn", bb, d);
    detail::attention(inv, p + ".cross_attn", bb, d);
    detail::linear(inv, p + ".ff.in", bb, d, a.ff_dim);
    detail::linear(inv, p + ".ff.out", bb, a.ff_dim, d);
  }
  detail::norm(inv, "backbone.dec_norm", bb, d);

  const std::string hp = partition::head(lang), head = "head." + lang;
  inv.push_back({head + ".embed", hp, {a.vocab, d}});
  detail::linear(inv, head + ".out", hp, d, a.vocab);
  detail::linear(inv, head + ".ctc", hp, d, a.vocab);

  const std::string ap = partition::adapter(lang), fp = partition::kFusion;
  for (std::size_t g = 0; g < a.encoder_layers + a.decoder_layers; ++g) {
    const bool dec = g >= a.encoder_layers;
    const std::string where = (dec ? ".dec." : ".enc.") +
                              std::to_string(dec ? g - a.encoder_layers : g);
    const std::string p = "adapter." + lang + where;
    detail::norm(inv, p + ".ln", ap, d);
    inv.push_back({p + ".wd", ap, {d, a.adapter_bottleneck}});
    inv.push_back({p + ".wu", ap, {a.adapter_bottleneck, d}});
    // The reference fusion block carries a layer norm next to its three
    // projections.
    const std::string f = "fusion" + where;
    for (const char* n : {".wq", ".wk", ".wv"}) inv.push_back({f + n, fp, {d, d}});
    detail::norm(inv, f + ".ln", fp, d);
  }
  return inv;
}

}  // namespace xadapt::adapters
