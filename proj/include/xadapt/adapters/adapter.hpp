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

#include <string>
#include <vector>

#include "xadapt/backbone/model.hpp"

namespace xadapt::adapters {

using backbone::HookPoint;
using backbone::LayerHook;
using dc::Tape;
using dc::Tensor;

struct AdapterConfig {
  std::size_t bottleneck_dim = 8;
  double init_bound = 0.1;  // W_d ~ U(-bound, bound); W_u starts at zero
};

/// Parameter-name prefix of the adapter at one hook point.
inline std::string adapter_prefix(const std::string& lang, const HookPoint& at) {
  return "adapter." + lang + (at.decoder ? ".dec." : ".enc.") + std::to_string(at.layer);
}

/// Every hook point of a backbone, encoder layers first.
inline std::vector<HookPoint> hook_points(const backbone::BackboneConfig& cfg) {
  std::vector<HookPoint> out;
  for (std::size_t l = 0; l < cfg.num_encoder_layers; ++l) out.push_back({false, l, l});
  for (std::size_t l = 0; l < cfg.num_decoder_layers; ++l)
    out.push_back({true, l, cfg.num_encoder_layers + l});
  return out;
}

/// Bottleneck residual block: z + relu(LN(z) W_d) W_u, position-wise.
template <class T>
struct AdapterLayer {
  Tensor<T> ln_g, ln_b;
  Tensor<T> w_down;  // [model_dim x bottleneck]
  Tensor<T> w_up;    // [bottleneck x model_dim]

  Tensor<T> forward(Tape<T>& tp, const Tensor<T>& z) const {
    if (z.rank() != 2 || z.cols() != w_down.rows())
      throw dc::ShapeError("adapter_forward", z.shape(), w_down.shape());
    Tensor<T> h = dc::relu(tp, dc::matmul(tp, dc::layer_norm(tp, z, ln_g, ln_b), w_down));
    return dc::add(tp, z, dc::matmul(tp, h, w_up));
  }

  static AdapterLayer bind(ParamSet<T>& ps, const std::string& prefix) {
    return {ps.get(prefix + ".ln.g"), ps.get(prefix + ".ln.b"), ps.get(prefix + ".wd"),
            ps.get(prefix + ".wu")};
  }
};

template <class T>
Tensor<T> adapter_forward(Tape<T>& tp, const AdapterLayer<T>& layer, const Tensor<T>& z) {
  return layer.forward(tp, z);
}

/// Adds one adapter per hook point for `lang` in partition "adapter:<lang>".
inline void init_adapters(ParamSet<double>& ps, const backbone::BackboneConfig& cfg,
                          const std::string& lang, const AdapterConfig& acfg, Rng& rng) {
  const std::string part = partition::adapter(lang);
  const std::size_t d = cfg.model_dim, b = acfg.bottleneck_dim;
  for (const auto& at : hook_points(cfg)) {
    const std::string p = adapter_prefix(lang, at);
    ps.add(p + ".ln.g", part, Tensor<double>({d}, std::vector<double>(d, 1.0)));
    ps.add(p + ".ln.b", part, Tensor<double>::zeros({d}));
    std::vector<double> wd(d * b);
    for (auto& x : wd) x = rng.uniform(-acfg.init_bound, acfg.init_bound);
    ps.add(p + ".wd", part, Tensor<double>({d, b}, std::move(wd)));
    ps.add(p + ".wu", part, Tensor<double>::zeros({b, d}));
  }
}

inline bool has_adapters(const ParamSet<double>& ps, const std::string& lang) {
  return ps.has_partition(partition::adapter(lang));
}

/// The adapters of one language at every hook point.
template <class T>
class AdapterStack : public LayerHook<T> {
 public:
  AdapterStack(ParamSet<T>& ps, const backbone::BackboneConfig& cfg, const std::string& lang)
      : lang_(lang) {
    for (const auto& at : hook_points(cfg))
      layers_.push_back(AdapterLayer<T>::bind(ps, adapter_prefix(lang, at)));
  }

  const std::string& language() const { return lang_; }
  const AdapterLayer<T>& layer(std::size_t global) const { return layers_.at(global); }
  std::size_t size() const { return layers_.size(); }

  Tensor<T> apply(Tape<T>& tp, const Tensor<T>& z, const HookPoint& at) const override {
    return layers_.at(at.global).forward(tp, z);
  }

 private:
  std::string lang_;
  std::vector<AdapterLayer<T>> layers_;
};

}  // namespace xadapt::adapters
