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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xadapt/adapters/accounting.hpp"
#include "xadapt/diffcalc/checkpoint.hpp"
#include "xadapt/harness/config.hpp"
#include "xadapt/metalearn/meta_train.hpp"
#include "xadapt/synth/language.hpp"

namespace xadapt::harness {

inline constexpr const char* kRoot = "root";
inline constexpr const char* kMetaAdapter = "meta";
inline constexpr const char* kMolAdapter = "mol";

class StageError : public Error {
 public:
  using Error::Error;
};

/// Everything an experiment has produced so far for one seed.
struct Workspace {
  ExperimentConfig cfg;
  std::map<std::string, synth::LanguageSpec> specs;  // root, sources, targets
  std::map<std::string, synth::Corpus> corpora;
  ParamSet<double> params;
  std::map<std::string, double> stage_ms;

  std::vector<std::string> source_ids() const {
    std::vector<std::string> v;
    for (const auto& s : cfg.sources) v.push_back(s.id);
    return v;
  }
  std::vector<std::string> target_ids() const {
    std::vector<std::string> v;
    for (const auto& s : cfg.targets) v.push_back(s.id);
    return v;
  }
  const synth::Corpus& corpus(const std::string& lang) const {
    const auto it = corpora.find(lang);
    if (it == corpora.end()) throw StageError("missing corpus for language '" + lang + "'");
    return it->second;
  }
  bool has_head(const std::string& lang) const { return backbone::LanguageHead<double>::exists(params, lang); }
  bool has_adapter(const std::string& lang) const { return params.has_partition(partition::adapter(lang)); }

  void require_head(const std::string& stage, const std::string& lang) const {
    if (!has_head(lang)) throw StageError(stage + ": missing head for language '" + lang + "' (train-heads)");
  }
  void require_adapter(const std::string& stage, const std::string& lang) const {
    if (!has_adapter(lang))
      throw StageError(stage + ": missing adapter for language '" + lang + "' (train-adapters)");
  }
  void require_backbone(const std::string& stage) const {
    if (!params.has_partition(partition::kBackbone)) throw StageError(stage + ": missing backbone (pretrain)");
  }
};

namespace detail {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
};

}  // namespace detail

/// Language specs and corpora for the root, sources and targets.
inline void generate_data(Workspace& ws) {
  const auto& c = ws.cfg;
  c.validate();
  detail::Timer timer;
  ws.specs.clear();
  ws.corpora.clear();
  const auto root = synth::root_language(c.root_seed, c.root, kRoot);
  ws.specs[kRoot] = root;
  synth::CorpusOptions co = c.corpus;
  co.subsample_factor = c.backbone.subsample_factor;
  ws.corpora[kRoot] = synth::sample_corpus(root, c.pretrain_utts, derive_seed(c.backbone_seed, "pretrain-corpus"), co);

  enum class Kind { kFamily, kSource, kTarget };
  std::vector<std::pair<LanguageEntry, Kind>> pending;
  for (const auto& f : c.families) pending.push_back({f, Kind::kFamily});
  for (const auto& s : c.sources) pending.push_back({s, Kind::kSource});
  for (const auto& t : c.targets) pending.push_back({t, Kind::kTarget});
  while (!pending.empty()) {
    bool progress = false;
    for (auto it = pending.begin(); it != pending.end();) {
      const auto base = ws.specs.find(it->first.base);
      if (base == ws.specs.end()) {
        ++it;
        continue;
      }
      const auto& e = it->first;
      auto spec = synth::derive_language(base->second, e.delta, derive_seed(c.seed, "lang:" + e.id), e.id);
      if (it->second != Kind::kFamily) {
        synth::CorpusOptions o = co;
        std::size_t n = c.source_utts;
        if (it->second == Kind::kTarget) {
          o.valid_fraction = c.target_valid_fraction;
          o.test_fraction = c.target_test_fraction;
          n = c.target_utts;
        }
        ws.corpora[e.id] = synth::sample_corpus(spec, n, derive_seed(c.seed, "corpus:" + e.id), o);
      }
      ws.specs[e.id] = std::move(spec);
      it = pending.erase(it);
      progress = true;
    }
    if (!progress) throw ConfigError("config: language '" + pending.front().first.id + "' has an unknown base");
  }
  ws.stage_ms["gen-data"] = timer.ms();
}

/// Trains the backbone and the root head on the root corpus, then freezes
/// the backbone.
inline FitResult pretrain_backbone(Workspace& ws) {
  const auto& c = ws.cfg;
  detail::Timer timer;
  ws.params = ParamSet<double>();
  Rng rng(derive_seed(c.backbone_seed, "backbone-init"));
  backbone::Backbone<double>::init(ws.params, c.backbone, rng);
  backbone::LanguageHead<double>::init(ws.params, c.backbone, kRoot, rng);
  const auto& corpus = ws.corpus(kRoot);
  FitOptions f = c.fit_options(c.pretrain, "pretrain");
  f.seed = derive_seed(c.backbone_seed, "pretrain");
  auto r = fit(ws.params, {partition::kBackbone, partition::head(kRoot)}, objective(c.backbone, {kRoot}, c.loss),
               corpus.train, &corpus.valid, f);
  ws.params.freeze_all();
  ws.stage_ms["pretrain"] = timer.ms();
  return r;
}

/// Copies the backbone and root head from another workspace's parameters.
inline void adopt_backbone(Workspace& ws, const ParamSet<double>& pretrained) {
  ws.params = ParamSet<double>();
  dc::Checkpoint::from_params(pretrained, {partition::kBackbone, partition::head(kRoot)}).apply_to(ws.params);
  ws.params.freeze_all();
}

/// Creates (or replaces) the head of `lang` per cfg.head_init.
inline void new_head(Workspace& ws, const std::string& lang) {
  if (ws.has_head(lang)) ws.params.erase_partition(partition::head(lang));
  if (ws.cfg.head_init == "root") {
    ws.params.copy_partition(ws.params, partition::head(kRoot), partition::head(lang), "head.root.",
                             "head." + lang + ".");
  } else {
    Rng rng(derive_seed(ws.cfg.seed, "head-init:" + lang));
    backbone::LanguageHead<double>::init(ws.params, ws.cfg.backbone, lang, rng);
  }
  ws.params.freeze(partition::head(lang));
}

/// Stage 1: a head per language with the backbone frozen. Targets use
/// early stopping; sources do not.
inline FitResult train_head(Workspace& ws, const std::string& lang, bool target) {
  const auto& c = ws.cfg;
  ws.require_backbone("train-heads");
  if (!ws.has_head(lang)) new_head(ws, lang);
  const auto& corpus = ws.corpus(lang);
  const Budget& b = target ? c.target_head : c.source_head;
  return fit(ws.params, {partition::head(lang)}, objective(c.backbone, {lang}, c.loss), corpus.train,
             target ? &corpus.valid : nullptr, c.fit_options(b, "head:" + lang));
}

inline void init_adapter(Workspace& ws, const std::string& lang, const std::string& tag) {
  Rng rng(derive_seed(ws.cfg.seed, "adapter-init:" + tag));
  if (ws.has_adapter(lang)) ws.params.erase_partition(partition::adapter(lang));
  adapters::init_adapters(ws.params, ws.cfg.backbone, lang, ws.cfg.adapter, rng);
  ws.params.freeze(partition::adapter(lang));
}

/// Copies adapter `from` into adapter `to` (replacing it).
inline void copy_adapter(Workspace& ws, const std::string& from, const std::string& to) {
  ws.require_adapter("copy-adapter", from);
  if (ws.has_adapter(to)) ws.params.erase_partition(partition::adapter(to));
  ws.params.copy_partition(ws.params, partition::adapter(from), partition::adapter(to), "adapter." + from + ".",
                           "adapter." + to + ".");
  ws.params.freeze(partition::adapter(to));
}

/// Stage 2: the language's adapter on top of its (frozen) head.
inline FitResult train_adapter(Workspace& ws, const std::string& lang, bool target) {
  const auto& c = ws.cfg;
  ws.require_head("train-adapters", lang);
  if (!ws.has_adapter(lang)) init_adapter(ws, lang, lang);
  const auto& corpus = ws.corpus(lang);
  const Budget& b = target ? c.target_adapter : c.source_adapter;
  return fit(ws.params, {partition::adapter(lang)}, objective(c.backbone, {lang, lang}, c.loss), corpus.train,
             target ? &corpus.valid : nullptr, c.fit_options(b, "adapter:" + lang));
}

/// Heads and adapters for every source language.
inline void prepare_sources(Workspace& ws) {
  detail::Timer timer;
  for (const auto& s : ws.source_ids()) train_head(ws, s, false);
  ws.stage_ms["train-heads"] = timer.ms();
  detail::Timer t2;
  for (const auto& s : ws.source_ids()) train_adapter(ws, s, false);
  ws.stage_ms["train-adapters"] = t2.ms();
}

inline std::vector<metalearn::MetaSource> meta_sources(const Workspace& ws) {
  std::vector<metalearn::MetaSource> v;
  for (const auto& s : ws.source_ids()) v.push_back({s, &ws.corpus(s).train});
  return v;
}

inline metalearn::MetaConfig meta_config(const ExperimentConfig& c, std::size_t epochs) {
  metalearn::MetaConfig m;
  m.inner = c.inner_options();
  m.meta_step = c.meta.meta_step;
  m.epochs = epochs;
  m.steps_per_epoch = c.meta.steps_per_epoch;
  m.episode_size = c.meta.episode_size;
  m.train_fraction = c.meta.train_fraction;
  m.order = c.meta.order == "second" ? metalearn::Order::kSecond : metalearn::Order::kFirst;
  m.seed = derive_seed(c.seed, "meta");
  return m;
}

/// MetaAdapter pre-training over the sources into adapter "meta".
inline std::vector<metalearn::MetaLogEntry> meta_pretrain(Workspace& ws, std::size_t epochs) {
  detail::Timer timer;
  for (const auto& s : ws.source_ids()) ws.require_head("meta-train", s);
  init_adapter(ws, kMetaAdapter, "meta");
  auto log = metalearn::meta_train(ws.params, ws.cfg.backbone, meta_config(ws.cfg, epochs), meta_sources(ws),
                                   ws.cfg.loss.lambda, kMetaAdapter);
  ws.stage_ms["meta-train"] = timer.ms();
  return log;
}

/// Pooled multi-objective pre-training into adapter "mol".
inline void mol_pretrain(Workspace& ws, std::size_t epochs) {
  detail::Timer timer;
  for (const auto& s : ws.source_ids()) ws.require_head("mol-train", s);
  init_adapter(ws, kMolAdapter, "meta");  // same initial point as the MetaAdapter
  const auto& c = ws.cfg;
  metalearn::mol_train(ws.params, c.backbone, meta_sources(ws), epochs, c.meta.steps_per_epoch,
                       c.meta.episode_size, c.source_adapter.lr, c.loss.lambda, derive_seed(c.seed, "mol"),
                       kMolAdapter);
  ws.stage_ms["mol-train"] = timer.ms();
}

/// Stage 3: fusion layers only, for one target.
inline FitResult train_fusion(Workspace& ws, const std::string& target) {
  const auto& c = ws.cfg;
  ws.require_head("train-fusion", target);
  const auto plan = c.fusion_plan(target);
  for (const auto& l : plan.languages) ws.require_adapter("train-fusion", l);
  ws.require_adapter("train-fusion", target);
  if (ws.params.has_partition(partition::kFusion)) ws.params.erase_partition(partition::kFusion);
  Rng rng(derive_seed(c.seed, "fusion-init:" + target));
  fusion::init_fusion(ws.params, c.backbone, plan, c.fusion.init, rng);
  ws.params.freeze(partition::kFusion);
  const auto& corpus = ws.corpus(target);
  ModelSpec spec{target, target, plan, c.fusion.init.temperature};
  return fit(ws.params, {partition::kFusion}, objective(c.backbone, spec, c.loss), corpus.train, &corpus.valid,
             c.fit_options(c.target_fusion, "fusion:" + target));
}

/// Dataset-mean attention per fused language (rows) and fused layer
/// (columns, encoder layers first).
struct AttentionMap {
  std::vector<std::string> languages;
  std::vector<std::size_t> layers;  // global hook indices
  std::vector<std::vector<double>> mean;

  double row_mean(const std::string& lang) const {
    for (std::size_t i = 0; i < languages.size(); ++i)
      if (languages[i] == lang) {
        double s = 0.0;
        for (double v : mean[i]) s += v;
        return mean[i].empty() ? 0.0 : s / double(mean[i].size());
      }
    throw Error("attention map: language '" + lang + "' not fused");
  }

  std::string csv() const {
    std::string out = "language";
    for (std::size_t l = 0; l < layers.size(); ++l) out += ",layer_" + std::to_string(l);
    out += "\n";
    for (std::size_t i = 0; i < languages.size(); ++i) {
      out += languages[i];
      for (double v : mean[i]) {
        char buf[32];
        std::snprintf(buf, sizeof buf, ",%.9f", v);
        out += buf;
      }
      out += "\n";
    }
    return out;
  }
};

/// Teacher-forced forward passes over `data`, averaging the captured
/// attention over every position of every utterance.
inline AttentionMap attention_map(ParamSet<double>& ps, const BackboneConfig& cfg, const ModelSpec& spec,
                                  const TaskBatch& data) {
  if (!spec.fusion) throw Error("export_attention: model has no fusion layers");
  BoundModel m(ps, cfg, spec);
  const auto points = spec.fusion->fused_points(cfg);
  std::map<std::size_t, std::size_t> col;
  for (std::size_t i = 0; i < points.size(); ++i) col[points[i].global] = i;
  const std::size_t N = spec.fusion->languages.size();
  std::vector<std::vector<double>> sum(N, std::vector<double>(points.size(), 0.0));
  std::vector<std::size_t> count(points.size(), 0);
  for (const auto& u : data) {
    fusion::FusionTrace<double> trace;
    m.fusion->set_trace(&trace);
    Tape<double> tp(false);
    const auto memory = m.model.encode(tp, u.features, m.hook.get());
    m.model.decode(tp, memory, backbone::decoder_inputs(u.tokens), m.head, m.hook.get());
    m.fusion->set_trace(nullptr);
    for (const auto& c : trace.captures) {
      const std::size_t j = col.at(c.layer);
      for (std::size_t r = 0; r < c.log_alpha.rows(); ++r)
        for (std::size_t i = 0; i < N; ++i) sum[i][j] += std::exp(c.log_alpha.at(r, i));
      count[j] += c.log_alpha.rows();
    }
  }
  AttentionMap a;
  a.languages = spec.fusion->languages;
  for (const auto& p : points) a.layers.push_back(p.global);
  a.mean = sum;
  for (auto& row : a.mean)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = count[j] ? row[j] / double(count[j]) : 0.0;
  return a;
}

struct LanguageResult {
  std::string language;
  double ter = 0.0;
  std::size_t test_size = 0;
  double decode_ms = 0.0;
  std::vector<DecodeRecord> records;
};

struct RunReport {
  std::string strategy;
  std::uint64_t seed = 0;
  std::vector<LanguageResult> languages;
  double average = 0.0;
  double weighted_average = 0.0;
  std::size_t trainable_params = 0;
  std::size_t full_params = 0;
  std::map<std::string, double> stage_ms;
  double train_step_ms = 0.0;
  double decode_ms = 0.0;
  bool freeze_audit_ok = true;
  std::vector<std::string> audit_failures;
  std::map<std::string, AttentionMap> attention;  // fused strategies only

  double trainable_ratio() const { return full_params ? double(trainable_params) / double(full_params) : 0.0; }

  void recompute_aggregates() {
    std::vector<double> m, w;
    for (const auto& l : languages) {
      m.push_back(l.ter);
      w.push_back(double(l.test_size));
    }
    if (m.empty()) return;
    average = synth::weighted_average(m, std::vector<double>(m.size(), 1.0));
    weighted_average = synth::weighted_average(m, w);
  }
};

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json langs = nlohmann::json::array();
  for (const auto& l : r.languages)
    langs.push_back({{"language", l.language}, {"ter", l.ter}, {"test_size", l.test_size}, {"decode_ms", l.decode_ms}});
  return {{"strategy", r.strategy},
          {"seed", r.seed},
          {"languages", langs},
          {"average", r.average},
          {"weighted_average", r.weighted_average},
          {"trainable_params", r.trainable_params},
          {"full_params", r.full_params},
          {"trainable_ratio", r.trainable_ratio()},
          {"stage_ms", r.stage_ms},
          {"train_step_ms", r.train_step_ms},
          {"decode_ms", r.decode_ms},
          {"freeze_audit_ok", r.freeze_audit_ok},
          {"audit_failures", r.audit_failures}};
}

inline RunReport report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.strategy = j.at("strategy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& l : j.at("languages")) {
    LanguageResult x;
    x.language = l.at("language").get<std::string>();
    x.ter = l.at("ter").get<double>();
    x.test_size = l.at("test_size").get<std::size_t>();
    x.decode_ms = l.at("decode_ms").get<double>();
    r.languages.push_back(std::move(x));
  }
  r.average = j.at("average").get<double>();
  r.weighted_average = j.at("weighted_average").get<double>();
  r.trainable_params = j.at("trainable_params").get<std::size_t>();
  r.full_params = j.at("full_params").get<std::size_t>();
  r.stage_ms = j.at("stage_ms").get<std::map<std::string, double>>();
  r.train_step_ms = j.at("train_step_ms").get<double>();
  r.decode_ms = j.at("decode_ms").get<double>();
  r.freeze_audit_ok = j.at("freeze_audit_ok").get<bool>();
  r.audit_failures = j.at("audit_failures").get<std::vector<std::string>>();
  return r;
}

/// Compares partition checksums against a baseline; every partition that
/// existed before and is not declared trainable must be bitwise unchanged.
inline std::vector<std::string> audit_freeze(const std::map<std::string, std::uint64_t>& before,
                                             const ParamSet<double>& after, const std::set<std::string>& trainable) {
  std::vector<std::string> bad;
  for (const auto& [p, sum] : before) {
    if (trainable.contains(p)) continue;
    if (!after.has_partition(p) || after.checksum(p) != sum) bad.push_back(p);
  }
  return bad;
}

struct StrategyOutcome {
  ModelSpec spec;
  std::set<std::string> trainable;
  double step_ms = 0.0;
  std::map<std::string, double> stage_ms;
  std::vector<std::string> audit_failures;
};

/// Trains one target under `strategy` inside `ps` (a copy of the workspace
/// parameters holding the backbone and, where needed, source heads,
/// source adapters and the MetaAdapter).
inline StrategyOutcome train_strategy(Workspace& ws, const std::string& strategy, const std::string& t) {
  const auto& c = ws.cfg;
  if (!known_strategy(strategy)) throw ConfigError("unknown strategy '" + strategy + "'");
  ws.require_backbone(strategy);
  StrategyOutcome o;
  auto step = [&](const std::string& stage, const std::set<std::string>& trainable, auto&& body) {
    const auto before = ws.params.checksums();
    detail::Timer timer;
    FitResult r = body();
    o.stage_ms[stage] += timer.ms();
    o.step_ms = r.mean_step_ms;
    for (const auto& p : audit_freeze(before, ws.params, trainable)) o.audit_failures.push_back(stage + ":" + p);
    o.trainable.insert(trainable.begin(), trainable.end());
  };
  const std::string head = partition::head(t), adapter = partition::adapter(t);
  auto fresh_head = [&] { new_head(ws, t); };
  const auto& corpus = ws.corpus(t);

  if (strategy == "head" || strategy == "adapter" || strategy == "meta_adapter" || strategy == "simadapter" ||
      strategy == "simadapter_plus") {
    if (ws.has_head(t)) ws.params.erase_partition(head);
    step("head", {head}, [&] { return train_head(ws, t, true); });
    o.spec = {t};
  }
  if (strategy == "adapter" || strategy == "simadapter" || strategy == "meta_adapter" || strategy == "simadapter_plus") {
    const bool meta = strategy == "meta_adapter" || strategy == "simadapter_plus";
    if (meta) {
      ws.require_adapter(strategy, kMetaAdapter);
      copy_adapter(ws, kMetaAdapter, t);
    } else {
      init_adapter(ws, t, t);
    }
    step("adapter", {adapter}, [&] { return train_adapter(ws, t, true); });
    o.spec = {t, t};
  }
  if (strategy == "simadapter" || strategy == "simadapter_plus") {
    for (const auto& s : ws.source_ids()) ws.require_adapter(strategy, s);
    step("fusion", {partition::kFusion}, [&] { return train_fusion(ws, t); });
    o.spec = {t, t, c.fusion_plan(t), c.fusion.init.temperature};
  }
  if (strategy == "adapter_joint") {
    fresh_head();
    init_adapter(ws, t, t);
    Budget b = c.target_adapter;
    b.epochs = c.target_head.epochs + c.target_adapter.epochs;
    step("joint", {head, adapter}, [&] {
      return fit(ws.params, {head, adapter}, objective(c.backbone, {t, t}, c.loss), corpus.train, &corpus.valid,
                 c.fit_options(b, "joint:" + t));
    });
    o.spec = {t, t};
  }
  if (strategy == "full_ft" || strategy == "full_ft_l2") {
    fresh_head();
    const double l2 = strategy == "full_ft_l2" ? c.l2 : 0.0;
    step("full", {partition::kBackbone, head}, [&] {
      return fit(ws.params, {partition::kBackbone, head}, objective(c.backbone, {t}, c.loss), corpus.train,
                 &corpus.valid, c.fit_options(c.target_full, "full:" + t, l2));
    });
    o.spec = {t};
  }
  if (strategy == "part_ft") {
    fresh_head();
    const std::string tail = "backbone:tail";
    ws.params.move_to_partition(backbone::Backbone<double>::last_decoder_prefix(c.backbone), tail);
    step("part", {tail, head}, [&] {
      return fit(ws.params, {tail, head}, objective(c.backbone, {t}, c.loss), corpus.train, &corpus.valid,
                 c.fit_options(c.target_full, "part:" + t));
    });
    o.spec = {t};
  }
  ws.params.freeze_all();
  return o;
}

/// Called once per target with the trained parameters.
using TargetCallback =
    std::function<void(const std::string& target, ParamSet<double>& params, const StrategyOutcome& outcome)>;

/// Runs `strategy` for every target on copies of the workspace parameters.
inline RunReport run_strategy(const Workspace& ws, const std::string& strategy,
                              const TargetCallback& on_target = nullptr) {
  RunReport rep;
  rep.strategy = strategy;
  rep.seed = ws.cfg.seed;
  double step_ms = 0.0, decode_ms = 0.0;
  for (const auto& t : ws.target_ids()) {
    Workspace run{ws.cfg, ws.specs, ws.corpora, ws.params.clone(), {}};
    const auto o = train_strategy(run, strategy, t);
    if (on_target) on_target(t, run.params, o);
    for (const auto& [k, v] : o.stage_ms) rep.stage_ms[k] += v;
    for (const auto& f : o.audit_failures) rep.audit_failures.push_back(t + ":" + f);
    step_ms += o.step_ms;
    const auto ev = evaluate_ter(run.params, ws.cfg.backbone, o.spec, ws.corpus(t).test, ws.cfg.decode_options());
    rep.languages.push_back({t, ev.ter, ws.corpus(t).test.size(), ev.mean_decode_ms, ev.records});
    decode_ms += ev.mean_decode_ms;
    const auto inv = adapters::inventory_of(run.params);
    std::set<std::string> active = o.trainable;
    rep.trainable_params += adapters::count_trainable(inv, active, 0).trainable;
    rep.full_params += adapters::full_model_count(inv, t);
    if (o.spec.fusion)
      rep.attention[t] = attention_map(run.params, ws.cfg.backbone, o.spec, ws.corpus(t).test);
  }
  const double n = double(ws.target_ids().size());
  rep.train_step_ms = step_ms / n;
  rep.decode_ms = decode_ms / n;
  rep.trainable_params = static_cast<std::size_t>(double(rep.trainable_params) / n);
  rep.full_params = static_cast<std::size_t>(double(rep.full_params) / n);
  rep.freeze_audit_ok = rep.audit_failures.empty();
  rep.recompute_aggregates();
  return rep;
}

/// Builds a workspace through the shared stages: data, backbone, source
/// heads and adapters, and the MetaAdapter.
inline Workspace build_workspace(const ExperimentConfig& cfg, const ParamSet<double>* pretrained = nullptr,
                                 bool with_meta = true) {
  Workspace ws;
  ws.cfg = cfg;
  generate_data(ws);
  if (pretrained)
    adopt_backbone(ws, *pretrained);
  else
    pretrain_backbone(ws);
  prepare_sources(ws);
  if (with_meta) meta_pretrain(ws, cfg.meta.epochs);
  return ws;
}

struct SweepRow {
  std::string value;
  RunReport report;
};

/// Applies one sweep value to a config.
inline ExperimentConfig with_sweep_value(ExperimentConfig c, const std::string& axis, const std::string& value) {
  if (axis == "gamma") {
    c.loss.gamma = std::stod(value);
  } else if (axis == "meta_epochs") {
    c.meta.epochs = std::stoul(value);
  } else if (axis == "fusion_plan") {
    // "enc<N>-dec<M>"
    unsigned e = 0, d = 0;
    if (std::sscanf(value.c_str(), "enc%u-dec%u", &e, &d) != 2)
      throw ConfigError("sweep: fusion plan values look like enc<N>-dec<M>, got '" + value + "'");
    c.fusion.encoder_layers = e;
    c.fusion.decoder_layers = d;
  } else {
    throw ConfigError("sweep: unknown axis '" + axis + "' (gamma, meta_epochs, fusion_plan)");
  }
  c.validate();
  return c;
}

/// One run per value, sharing the pretrained backbone.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& axis,
                                   const std::vector<std::string>& values, const ParamSet<double>* pretrained = nullptr) {
  if (values.empty()) throw ConfigError("sweep: no values");
  for (const auto& v : values) with_sweep_value(base, axis, v);  // validate all first
  std::vector<SweepRow> rows;
  std::optional<Workspace> shared;
  for (const auto& v : values) {
    const auto cfg = with_sweep_value(base, axis, v);
    // Only the meta-epoch axis changes the shared stages.
    if (!shared || axis == "meta_epochs") {
      if (shared && axis == "meta_epochs") {
        shared->cfg = cfg;
        meta_pretrain(*shared, cfg.meta.epochs);
      } else {
        shared = build_workspace(cfg, pretrained, cfg.strategy == "meta_adapter" || cfg.strategy == "simadapter_plus");
      }
    }
    shared->cfg = cfg;
    rows.push_back({v, run_strategy(*shared, cfg.strategy)});
  }
  return rows;
}

inline std::string sweep_csv(const std::string& axis, const std::vector<SweepRow>& rows) {
  std::string out = axis + ",strategy,seed,average_ter,weighted_average_ter,trainable_params\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%s,%llu,%.6f,%.6f,%zu\n", r.report.strategy.c_str(),
                  static_cast<unsigned long long>(r.report.seed), r.report.average, r.report.weighted_average,
                  r.report.trainable_params);
    out += r.value + buf;
  }
  return out;
}

/// Training-step and decode time of each strategy relative to full_ft.
struct TimeRow {
  std::string strategy;
  std::size_t trainable_params = 0;
  double train_step_ms = 0.0;
  double decode_ms = 0.0;
  double rel_train = 0.0;   // fraction change vs full_ft
  double rel_decode = 0.0;
};

struct TimeReport {
  std::vector<TimeRow> rows;
  // Published reference deltas against full fine-tuning.
  static constexpr double kReferenceMetaTrainDelta = -0.4348;
  static constexpr double kReferenceSimDecodeDelta = 0.2212;

  std::string csv() const {
    std::string out = "strategy,trainable_params,train_step_ms,decode_ms,rel_train_time,rel_decode_time\n";
    for (const auto& r : rows) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s,%zu,%.4f,%.4f,%+.4f,%+.4f\n", r.strategy.c_str(), r.trainable_params,
                    r.train_step_ms, r.decode_ms, r.rel_train, r.rel_decode);
      out += buf;
    }
    char ref[160];
    std::snprintf(ref, sizeof ref, "# reference: meta_adapter train time %+.2f%%, simadapter RTF %+.2f%%\n",
                  kReferenceMetaTrainDelta * 100.0, kReferenceSimDecodeDelta * 100.0);
    return out + ref;
  }
};

inline TimeReport time_report(const std::vector<RunReport>& reports) {
  const RunReport* base = nullptr;
  for (const auto& r : reports)
    if (r.strategy == "full_ft") base = &r;
  if (!base) throw Error("time_report: needs a full_ft report as the baseline");
  TimeReport t;
  for (const auto& r : reports)
    t.rows.push_back({r.strategy, r.trainable_params, r.train_step_ms, r.decode_ms,
                      r.train_step_ms / base->train_step_ms - 1.0, r.decode_ms / base->decode_ms - 1.0});
  return t;
}

}  // namespace xadapt::harness
