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
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xadapt/harness/train.hpp"
#include "xadapt/metalearn/maml.hpp"

namespace xadapt::metalearn {

struct MetaConfig {
  InnerOptions inner;
  double meta_step = 1.0;
  std::size_t epochs = 30;
  std::size_t steps_per_epoch = 4;  // meta steps per epoch, one episode per source each
  std::size_t episode_size = 20;
  double train_fraction = 0.8;
  Order order = Order::kFirst;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(inner.lr > 0.0)) throw MetaError("meta config: inner learning rate must be positive");
    if (!(meta_step > 0.0)) throw MetaError("meta config: meta step size must be positive");
    if (inner.steps == 0) throw MetaError("meta config: inner_steps must be >= 1");
    if (episode_size < 2) throw MetaError("meta config: episodes need at least 2 utterances");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw MetaError("meta config: train fraction must lie in (0, 1)");
  }
};

/// A source language: its id (head name) and training utterances.
struct MetaSource {
  std::string lang;
  const TaskBatch* train = nullptr;
};

struct Episode {
  std::string lang;
  TaskBatch train, val;
};

/// Draws episode_size utterances without replacement and splits them.
inline Episode sample_episode(const MetaSource& src, const MetaConfig& cfg, Rng& rng) {
  if (!src.train || src.train->size() < 2) throw MetaError("episode: source '" + src.lang + "' has too little data");
  std::vector<std::size_t> idx(src.train->size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  const std::size_t n = std::min(cfg.episode_size, idx.size());
  std::size_t n_tr = static_cast<std::size_t>(std::llround(cfg.train_fraction * double(n)));
  n_tr = std::clamp<std::size_t>(n_tr, 1, n - 1);
  Episode e;
  e.lang = src.lang;
  for (std::size_t i = 0; i < n; ++i) (i < n_tr ? e.train : e.val).push_back((*src.train)[idx[i]]);
  return e;
}

struct MetaLogEntry {
  std::size_t epoch = 0;
  double mu = 0.0;
  std::map<std::string, double> val_loss;  // mean meta-validation loss per source
  double wall_ms = 0.0;
};

inline nlohmann::json to_json(const MetaLogEntry& e) {
  return {{"epoch", e.epoch}, {"mu", e.mu}, {"per_language_val_loss", e.val_loss}, {"wall_ms", e.wall_ms}};
}

/// Loss and gradient of one language's ASR objective as a function of a
/// flat adapter partition.
inline LossGrad partition_objective(ParamSet<double>& ps, const backbone::BackboneConfig& bcfg,
                                    const std::string& head, const std::string& adapter_lang,
                                    const TaskBatch& data, double lambda) {
  const std::string part = partition::adapter(adapter_lang);
  auto fn = harness::objective(bcfg, {head, adapter_lang, std::nullopt, 1.0}, {lambda, 0.0, 0.0});
  return [&ps, part, fn, &data](std::span<const double> theta, Vec* grad) {
    ps.restore(part, theta);
    ps.zero_grad();
    dc::Tape<double> tp(grad != nullptr);
    const auto loss = fn(tp, ps, data);
    if (grad) {
      tp.backward(loss);
      *grad = ps.gradient(part);
      ps.zero_grad();
    }
    return loss.item();
  };
}

/// MAML over the sources on the shared adapter `adapter_lang`, which must
/// already exist. Every source head must exist before training begins.
inline std::vector<MetaLogEntry> meta_train(ParamSet<double>& ps, const backbone::BackboneConfig& bcfg,
                                            const MetaConfig& cfg, const std::vector<MetaSource>& sources,
                                            double lambda, const std::string& adapter_lang = "meta") {
  cfg.validate();
  if (sources.empty()) throw MetaError("meta_train: no source languages");
  for (const auto& s : sources)
    if (!backbone::LanguageHead<double>::exists(ps, s.lang))
      throw MetaError("meta_train: missing head for source language '" + s.lang + "'");
  const std::string part = partition::adapter(adapter_lang);
  if (!ps.has_partition(part)) throw MetaError("meta_train: adapter '" + adapter_lang + "' is not initialized");

  const auto trainable_before = ps.trainable_partitions();
  ps.train_only({part});
  Rng rng(derive_seed(cfg.seed, "meta-episodes"));
  Vec theta = ps.snapshot(part);
  std::vector<MetaLogEntry> log;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    MetaLogEntry entry;
    entry.epoch = epoch;
    entry.mu = annealed_mu(cfg.meta_step, epoch, cfg.epochs);
    std::map<std::string, double> sums;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      std::vector<Episode> episodes;
      for (const auto& s : sources) episodes.push_back(sample_episode(s, cfg, rng));
      std::vector<MetaTask> tasks;
      for (const auto& e : episodes) {
        MetaTask t;
        t.id = e.lang + "@" + std::to_string(epoch) + "." + std::to_string(step);
        t.train = partition_objective(ps, bcfg, e.lang, adapter_lang, e.train, lambda);
        t.val = partition_objective(ps, bcfg, e.lang, adapter_lang, e.val, lambda);
        if (cfg.order == Order::kSecond) t.train_hvp = finite_difference_hvp(t.train);
        tasks.push_back(std::move(t));
      }
      const auto r = meta_step(theta, tasks, entry.mu, cfg.order, cfg.inner);
      for (std::size_t i = 0; i < episodes.size(); ++i) sums[episodes[i].lang] += r.val_losses[i];
    }
    for (const auto& [lang, s] : sums) entry.val_loss[lang] = s / double(cfg.steps_per_epoch);
    entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    log.push_back(std::move(entry));
  }
  ps.restore(part, theta);
  ps.train_only(trainable_before);
  return log;
}

/// Pooled multi-objective baseline: the shared adapter minimizes the sum of
/// the source losses with Adam, one minibatch per source per step.
inline void mol_train(ParamSet<double>& ps, const backbone::BackboneConfig& bcfg, const std::vector<MetaSource>& sources,
                      std::size_t epochs, std::size_t steps_per_epoch, std::size_t batch_size, double lr,
                      double lambda, std::uint64_t seed, const std::string& adapter_lang = "mol") {
  if (sources.empty()) throw MetaError("mol_train: no source languages");
  for (const auto& s : sources)
    if (!backbone::LanguageHead<double>::exists(ps, s.lang))
      throw MetaError("mol_train: missing head for source language '" + s.lang + "'");
  const std::string part = partition::adapter(adapter_lang);
  const auto trainable_before = ps.trainable_partitions();
  ps.train_only({part});
  dc::Adam adam({lr});
  Rng rng(derive_seed(seed, "mol"));
  std::vector<harness::LossFn> fns;
  for (const auto& s : sources)
    fns.push_back(harness::objective(bcfg, {s.lang, adapter_lang, std::nullopt, 1.0}, {lambda, 0.0, 0.0}));
  for (std::size_t e = 0; e < epochs * steps_per_epoch; ++e) {
    dc::Tape<double> tp;
    dc::Tensor<double> total;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      TaskBatch mb;
      for (std::size_t k = 0; k < batch_size; ++k)
        mb.push_back((*sources[i].train)[rng.below(sources[i].train->size())]);
      auto l = fns[i](tp, ps, mb);
      total = total.defined() ? dc::add(tp, total, l) : l;
    }
    tp.backward(total);
    adam.step(ps);
    ps.zero_grad();
  }
  ps.train_only(trainable_before);
}

}  // namespace xadapt::metalearn
