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

#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "xadapt/adapters/adapter.hpp"
#include "xadapt/backbone/loss.hpp"

namespace xadapt::fusion {

using adapters::AdapterStack;
using backbone::HookPoint;
using backbone::LayerHook;
using dc::Tape;
using dc::Tensor;

struct FusionConfig {
  double temperature = 1.0;
  double qk_init_bound = 0.05;  // W_Q, W_K ~ U(-bound, bound)
  double value_off_diagonal = 1e-6;
};

/// Which hook points fuse, and over which languages. The lowest
/// `encoder_layers` encoder layers and lowest `decoder_layers` decoder
/// layers carry fusion blocks; the rest apply the target adapter alone.
struct FusionPlan {
  std::vector<std::string> languages;  // fused set, in attention-column order
  std::string target;
  std::size_t encoder_layers = 0;
  std::size_t decoder_layers = 0;

  static FusionPlan full(const backbone::BackboneConfig& cfg, std::vector<std::string> languages,
                         std::string target) {
    return {std::move(languages), std::move(target), cfg.num_encoder_layers, cfg.num_decoder_layers};
  }

  bool fuses(const HookPoint& at) const {
    return at.decoder ? at.layer < decoder_layers : at.layer < encoder_layers;
  }

  /// Column of the target language in the attention matrix, or -1.
  int target_index() const {
    const auto it = std::find(languages.begin(), languages.end(), target);
    return it == languages.end() ? -1 : static_cast<int>(it - languages.begin());
  }

  void validate(const backbone::BackboneConfig& cfg) const {
    if (languages.empty()) throw Error("fusion plan: no fused languages");
    if (encoder_layers > cfg.num_encoder_layers || decoder_layers > cfg.num_decoder_layers)
      throw Error("fusion plan: more fused layers than the backbone has");
    if (encoder_layers + decoder_layers == 0) throw Error("fusion plan: no fused layers");
  }

  std::vector<HookPoint> fused_points(const backbone::BackboneConfig& cfg) const {
    std::vector<HookPoint> out;
    for (const auto& at : adapters::hook_points(cfg))
      if (fuses(at)) out.push_back(at);
    return out;
  }
};

inline std::string fusion_prefix(const HookPoint& at) {
  return std::string("fusion") + (at.decoder ? ".dec." : ".enc.") + std::to_string(at.layer);
}

/// Adds W_Q, W_K, W_V for every fused hook point to the "fusion" partition.
inline void init_fusion(ParamSet<double>& ps, const backbone::BackboneConfig& cfg,
                        const FusionPlan& plan, const FusionConfig& fcfg, Rng& rng) {
  plan.validate(cfg);
  const std::size_t d = cfg.model_dim;
  for (const auto& at : plan.fused_points(cfg)) {
    const std::string p = fusion_prefix(at);
    for (const char* n : {".wq", ".wk"}) {
      std::vector<double> w(d * d);
      for (auto& x : w) x = rng.uniform(-fcfg.qk_init_bound, fcfg.qk_init_bound);
      ps.add(p + n, partition::kFusion, Tensor<double>({d, d}, std::move(w)));
    }
    std::vector<double> wv(d * d, fcfg.value_off_diagonal);
    for (std::size_t i = 0; i < d; ++i) wv[i * d + i] = 1.0;
    ps.add(p + ".wv", partition::kFusion, Tensor<double>({d, d}, std::move(wv)));
  }
}

template <class T>
struct FusionLayer {
  Tensor<T> wq, wk, wv;
  T temperature = T(1);
};

/// Attention scores captured during forward passes: one entry per fused
/// hook point per forward, holding log-attention [positions x languages].
template <class T>
struct FusionTrace {
  struct Capture {
    std::size_t layer = 0;  // global hook index
    Tensor<T> log_alpha;
  };
  std::vector<Capture> captures;

  void clear() { captures.clear(); }
};

/// Position-wise attention over adapter outputs: query z_t, keys and values
/// a_{i,t}. Returns sum_i alpha_{t,i} (a_{i,t} W_V).
template <class T>
Tensor<T> simadapter_forward(Tape<T>& tp, const Tensor<T>& z, const std::vector<Tensor<T>>& outputs,
                             const FusionLayer<T>& layer, Tensor<T>* log_alpha_out = nullptr) {
  if (outputs.empty()) throw dc::ShapeError("simadapter_forward", "no adapter outputs");
  for (std::size_t i = 0; i < outputs.size(); ++i)
    if (outputs[i].shape() != z.shape())
      throw dc::ShapeError("simadapter_forward", "adapter output " + std::to_string(i) + " is " +
                                                     dc::shape_str(outputs[i].shape()) + ", query is " +
                                                     dc::shape_str(z.shape()));
  if (!(layer.temperature > T(0))) throw Error("simadapter_forward: temperature must be positive");
  const Tensor<T> q = dc::matmul(tp, z, layer.wq);
  std::vector<Tensor<T>> scores;
  scores.reserve(outputs.size());
  for (const auto& a : outputs) scores.push_back(dc::rowdot(tp, q, dc::matmul(tp, a, layer.wk)));
  Tensor<T> s = outputs.size() == 1 ? scores[0] : dc::concat_cols(tp, scores);
  if (layer.temperature != T(1)) s = dc::scale(tp, s, T(1) / layer.temperature);
  const Tensor<T> alpha = dc::softmax(tp, s);
  if (log_alpha_out) *log_alpha_out = dc::log_softmax(tp, s);
  Tensor<T> out;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    Tensor<T> v = dc::matmul(tp, outputs[i], layer.wv);
    Tensor<T> term = dc::mul_rows(tp, v, outputs.size() == 1 ? alpha : dc::slice_cols(tp, alpha, i, i + 1));
    out = out.defined() ? dc::add(tp, out, term) : term;
  }
  return out;
}

/// Hook that fuses the adapters of every planned language at fused hook
/// points and applies the target adapter alone elsewhere.
template <class T>
class FusionHook : public LayerHook<T> {
 public:
  FusionHook(ParamSet<T>& ps, const backbone::BackboneConfig& cfg, const FusionPlan& plan,
             T temperature)
      : plan_(plan) {
    plan_.validate(cfg);
    for (const auto& lang : plan_.languages)
      stacks_.push_back(std::make_unique<AdapterStack<T>>(ps, cfg, lang));
    const int ti = plan_.target_index();
    if (ti < 0) target_owned_ = std::make_unique<AdapterStack<T>>(ps, cfg, plan_.target);
    target_ = ti < 0 ? target_owned_.get() : stacks_[static_cast<std::size_t>(ti)].get();
    for (const auto& at : adapters::hook_points(cfg)) {
      if (!plan_.fuses(at)) {
        layers_.emplace_back();
        continue;
      }
      const std::string p = fusion_prefix(at);
      layers_.push_back(FusionLayer<T>{ps.get(p + ".wq"), ps.get(p + ".wk"), ps.get(p + ".wv"), temperature});
    }
  }

  void set_trace(FusionTrace<T>* trace) { trace_ = trace; }
  const FusionPlan& plan() const { return plan_; }
  const FusionLayer<T>& layer(std::size_t global) const { return layers_.at(global); }

  Tensor<T> apply(Tape<T>& tp, const Tensor<T>& z, const HookPoint& at) const override {
    if (!plan_.fuses(at)) return target_->apply(tp, z, at);
    std::vector<Tensor<T>> outs;
    outs.reserve(stacks_.size());
    for (const auto& s : stacks_) outs.push_back(s->apply(tp, z, at));
    Tensor<T> log_alpha;
    Tensor<T> y = simadapter_forward(tp, z, outs, layers_[at.global], trace_ ? &log_alpha : nullptr);
    if (trace_) trace_->captures.push_back({at.global, log_alpha});
    return y;
  }

 private:
  FusionPlan plan_;
  std::vector<std::unique_ptr<AdapterStack<T>>> stacks_;
  std::unique_ptr<AdapterStack<T>> target_owned_;
  const AdapterStack<T>* target_ = nullptr;
  std::vector<FusionLayer<T>> layers_;
  FusionTrace<T>* trace_ = nullptr;
};

/// sum_ij (I - W_V)_ij^2
template <class T>
Tensor<T> reg_loss(Tape<T>& tp, const Tensor<T>& wv) {
  if (wv.rank() != 2 || wv.rows() != wv.cols()) throw dc::ShapeError("reg_loss", "W_V must be square");
  const std::size_t d = wv.rows();
  std::vector<T> eye(d * d, T(0));
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = T(1);
  const Tensor<T> diff = dc::sub(tp, Tensor<T>({d, d}, std::move(eye)), wv);
  return dc::sum(tp, dc::mul(tp, diff, diff));
}

/// reg_loss summed over every fusion block of the hook.
template <class T>
Tensor<T> reg_loss(Tape<T>& tp, const FusionHook<T>& hook, const backbone::BackboneConfig& cfg) {
  Tensor<T> acc;
  for (const auto& at : hook.plan().fused_points(cfg)) {
    Tensor<T> r = reg_loss(tp, hook.layer(at.global).wv);
    acc = acc.defined() ? dc::add(tp, acc, r) : r;
  }
  return acc;
}

/// Per fused layer, the mean over all captured positions of
/// -log alpha_target; summed over layers.
template <class T>
Tensor<T> guide_loss(Tape<T>& tp, const FusionTrace<T>& trace, int target_index) {
  if (target_index < 0) throw Error("guide_loss: target language is not in the fused set");
  if (trace.captures.empty()) throw Error("guide_loss: no captured attention");
  std::map<std::size_t, std::pair<Tensor<T>, std::size_t>> per_layer;
  for (const auto& c : trace.captures) {
    if (static_cast<std::size_t>(target_index) >= c.log_alpha.cols())
      throw Error("guide_loss: target index outside the fused set");
    const std::vector<int> col(c.log_alpha.rows(), target_index);
    Tensor<T> s = dc::sum(tp, dc::pick(tp, c.log_alpha, std::span<const int>(col)));
    auto& [acc, n] = per_layer[c.layer];
    acc = acc.defined() ? dc::add(tp, acc, s) : s;
    n += c.log_alpha.rows();
  }
  Tensor<T> total;
  for (auto& [layer, entry] : per_layer) {
    Tensor<T> l = dc::scale(tp, entry.first, T(-1) / T(entry.second));
    total = total.defined() ? dc::add(tp, total, l) : l;
  }
  return total;
}

template <class T>
struct FusionLoss {
  Tensor<T> total;
  backbone::AsrLoss<T> asr;
  Tensor<T> reg;
  Tensor<T> guide;
};

/// L_asr + eta * L_reg + gamma * L_guide over one batch.
template <class T>
FusionLoss<T> total_loss(Tape<T>& tp, const backbone::Backbone<T>& model,
                         const backbone::LanguageHead<T>& head, FusionHook<T>& hook,
                         const TaskBatch& batch, T lambda, T eta, T gamma) {
  if (!(eta >= T(0) && gamma >= T(0))) throw Error("total_loss: eta and gamma must be non-negative");
  FusionTrace<T> trace;
  hook.set_trace(&trace);
  FusionLoss<T> r;
  try {
    r.asr = backbone::asr_loss(tp, model, head, batch, lambda, &hook);
  } catch (...) {
    hook.set_trace(nullptr);
    throw;
  }
  hook.set_trace(nullptr);
  r.reg = reg_loss(tp, hook, model.config());
  const int ti = hook.plan().target_index();
  r.total = r.asr.total;
  if (eta != T(0)) r.total = dc::add(tp, r.total, dc::scale(tp, r.reg, eta));
  if (ti >= 0) {
    r.guide = guide_loss(tp, trace, ti);
    if (gamma != T(0)) r.total = dc::add(tp, r.total, dc::scale(tp, r.guide, gamma));
  } else if (gamma != T(0)) {
    throw Error("total_loss: guide loss needs the target language in the fused set");
  }
  return r;
}

}  // namespace xadapt::fusion
