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

#include <chrono>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xadapt/adapters/adapter.hpp"
#include "xadapt/backbone/decode.hpp"
#include "xadapt/backbone/loss.hpp"
#include "xadapt/backbone/metrics.hpp"
#include "xadapt/diffcalc/optim.hpp"
#include "xadapt/fusion/simadapter.hpp"

namespace xadapt::harness {

using backbone::Backbone;
using backbone::BackboneConfig;
using backbone::LanguageHead;
using dc::Tape;
using dc::Tensor;

/// What sits on top of the backbone for one forward pass.
struct ModelSpec {
  std::string head;
  std::string adapter;  // empty: bare backbone
  std::optional<fusion::FusionPlan> fusion;
  double temperature = 1.0;
};

/// Views into a ParamSet for one ModelSpec.
struct BoundModel {
  Backbone<double> model;
  LanguageHead<double> head;
  std::unique_ptr<backbone::LayerHook<double>> hook;
  fusion::FusionHook<double>* fusion = nullptr;

  BoundModel(ParamSet<double>& ps, const BackboneConfig& cfg, const ModelSpec& spec)
      : model(cfg, ps), head(bind_head(ps, spec.head)) {
    if (spec.fusion) {
      auto h = std::make_unique<fusion::FusionHook<double>>(ps, cfg, *spec.fusion, spec.temperature);
      fusion = h.get();
      hook = std::move(h);
    } else if (!spec.adapter.empty()) {
      if (!ps.has_partition(partition::adapter(spec.adapter)))
        throw Error("model: no adapter for language '" + spec.adapter + "'");
      hook = std::make_unique<adapters::AdapterStack<double>>(ps, cfg, spec.adapter);
    }
  }

 private:
  static LanguageHead<double> bind_head(ParamSet<double>& ps, const std::string& lang) {
    if (!LanguageHead<double>::exists(ps, lang)) throw Error("model: no head for language '" + lang + "'");
    return LanguageHead<double>(ps, lang);
  }
};

struct LossWeights {
  double lambda = 0.3;
  double eta = 0.01;
  double gamma = 1.0;
};

using LossFn = std::function<Tensor<double>(Tape<double>&, ParamSet<double>&, const TaskBatch&)>;

/// Joint ASR loss, plus the fusion terms when the spec fuses adapters.
inline LossFn objective(const BackboneConfig& cfg, const ModelSpec& spec, const LossWeights& w) {
  return [cfg, spec, w](Tape<double>& tp, ParamSet<double>& ps, const TaskBatch& batch) {
    BoundModel m(ps, cfg, spec);
    if (m.fusion) return fusion::total_loss(tp, m.model, m.head, *m.fusion, batch, w.lambda, w.eta, w.gamma).total;
    return backbone::asr_loss(tp, m.model, m.head, batch, w.lambda, m.hook.get()).total;
  };
}

struct FitOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double lr = 3e-3;
  std::size_t patience = 0;  // 0 disables early stopping
  double l2 = 0.0;
  std::size_t warmup_steps = 0;
  std::uint64_t seed = 0;
};

struct FitResult {
  std::size_t epochs_run = 0;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  double best_valid = std::numeric_limits<double>::infinity();
  double mean_step_ms = 0.0;
  std::vector<double> train_loss, valid_loss;
};

/// Mean loss over a set, without recording.
inline double evaluate_loss(ParamSet<double>& ps, const LossFn& fn, const TaskBatch& data,
                            std::size_t chunk = 16) {
  if (data.empty()) throw Error("evaluate_loss: empty set");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); i += chunk) {
    const std::size_t end = std::min(data.size(), i + chunk);
    const TaskBatch part(data.begin() + long(i), data.begin() + long(end));
    Tape<double> tp(false);
    acc += fn(tp, ps, part).item() * double(end - i);
  }
  return acc / double(data.size());
}

/// Minibatch Adam on the `trainable` partitions; every other partition is
/// frozen for the duration and the previous trainable set is restored after. With patience > 0 and a validation set, stops
/// after `patience` epochs without improvement and restores the best epoch.
inline FitResult fit(ParamSet<double>& ps, const std::set<std::string>& trainable, const LossFn& fn,
                     const TaskBatch& train, const TaskBatch* valid, const FitOptions& opt) {
  if (train.empty()) throw Error("fit: empty training set");
  if (opt.batch_size == 0) throw Error("fit: batch size must be positive");
  for (const auto& p : trainable)
    if (!ps.has_partition(p)) throw Error("fit: unknown partition '" + p + "'");
  const auto trainable_before = ps.trainable_partitions();
  ps.train_only(trainable);
  dc::Adam adam({opt.lr, 0.9, 0.999, 1e-8, opt.l2});
  Rng rng(derive_seed(opt.seed, "fit"));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  FitResult r;
  std::map<std::string, std::vector<double>> best;
  auto keep_best = [&] {
    for (const auto& p : trainable) best[p] = ps.snapshot(p);
  };
  const bool early = opt.patience > 0 && valid && !valid->empty();
  if (early) {
    r.best_valid = evaluate_loss(ps, fn, *valid);
    keep_best();
  }
  double step_ms = 0.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t i = 0; i < order.size(); i += opt.batch_size) {
      const auto t0 = std::chrono::steady_clock::now();
      TaskBatch mb;
      for (std::size_t j = i; j < std::min(order.size(), i + opt.batch_size); ++j) mb.push_back(train[order[j]]);
      if (opt.warmup_steps > 0)
        adam.set_lr(opt.lr * std::min(1.0, double(r.steps + 1) / double(opt.warmup_steps)));
      Tape<double> tp;
      const Tensor<double> loss = fn(tp, ps, mb);
      if (!std::isfinite(loss.item())) throw NumericError("fit: non-finite training loss");
      tp.backward(loss);
      adam.step(ps);
      ps.zero_grad();
      epoch_loss += loss.item() * double(mb.size());
      ++r.steps;
      step_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    r.train_loss.push_back(epoch_loss / double(train.size()));
    r.epochs_run = epoch + 1;
    if (early) {
      const double v = evaluate_loss(ps, fn, *valid);
      r.valid_loss.push_back(v);
      if (v < r.best_valid) {
        r.best_valid = v;
        r.best_epoch = epoch + 1;
        since_best = 0;
        keep_best();
      } else if (++since_best >= opt.patience) {
        break;
      }
    }
  }
  if (early)
    for (const auto& [p, values] : best) ps.restore(p, values);
  r.mean_step_ms = r.steps ? step_ms / double(r.steps) : 0.0;
  ps.train_only(trainable_before);
  return r;
}

struct DecodeRecord {
  std::string utt_id;
  TokenSequence ref, hyp;
  double score = 0.0;
  double ter = 0.0;
};

struct EvalResult {
  double ter = 0.0;  // total edits over total reference tokens
  double mean_decode_ms = 0.0;
  std::vector<DecodeRecord> records;
};

inline EvalResult evaluate_ter(ParamSet<double>& ps, const BackboneConfig& cfg, const ModelSpec& spec,
                               const TaskBatch& data, const backbone::DecodeOptions& opt) {
  if (data.empty()) throw Error("evaluate_ter: empty set");
  BoundModel m(ps, cfg, spec);
  EvalResult r;
  std::size_t edits = 0, ref_tokens = 0;
  double ms = 0.0;
  for (const auto& u : data) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto d = backbone::joint_decode(m.model, m.head, u.features, opt, m.hook.get());
    ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const std::size_t e = edit_distance(d.tokens, u.tokens);
    edits += e;
    ref_tokens += u.tokens.size();
    r.records.push_back({u.utt_id, u.tokens, d.tokens, d.score, double(e) / double(u.tokens.size())});
  }
  r.ter = double(edits) / double(ref_tokens);
  r.mean_decode_ms = ms / double(data.size());
  return r;
}

}  // namespace xadapt::harness
