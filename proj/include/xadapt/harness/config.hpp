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
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xadapt/adapters/adapter.hpp"
#include "xadapt/fusion/simadapter.hpp"
#include "xadapt/harness/train.hpp"
#include "xadapt/metalearn/maml.hpp"
#include "xadapt/synth/language.hpp"

namespace xadapt::harness {

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names{"head",    "full_ft",      "full_ft_l2", "part_ft",
                                              "adapter", "adapter_joint", "meta_adapter", "simadapter",
                                              "simadapter_plus"};
  return names;
}

inline bool known_strategy(const std::string& s) {
  for (const auto& n : strategy_names())
    if (n == s) return true;
  return false;
}

/// A language of the experiment, derived from `base` ("root" or another
/// language) at mutation distance `delta`. Its seed comes from the
/// experiment seed and the id.
struct LanguageEntry {
  std::string id;
  std::string base = "root";
  double delta = 0.5;
  bool operator==(const LanguageEntry&) const = default;
};

struct Budget {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double lr = 3e-3;
  std::size_t patience = 0;
  bool operator==(const Budget&) const = default;
};

struct FusionSettings {
  fusion::FusionConfig init;
  long encoder_layers = -1;  // -1: every layer
  long decoder_layers = -1;
  bool include_target = true;
};

struct MetaSettings {
  double inner_lr = 0.028;
  double meta_step = 0.1;
  std::size_t epochs = 30;
  std::size_t inner_steps = 1;
  std::size_t steps_per_epoch = 16;
  std::size_t episode_size = 20;
  double train_fraction = 0.8;
  std::string order = "first";
  std::string inner_optimizer = "sgd";
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::uint64_t backbone_seed = 7;
  std::uint64_t root_seed = 2026;
  std::string strategy = "simadapter_plus";

  backbone::BackboneConfig backbone;
  adapters::AdapterConfig adapter;
  FusionSettings fusion;
  LossWeights loss;
  MetaSettings meta;
  std::size_t mol_epochs = 30;
  std::string head_init = "random";  // new-language heads: "random" or copied from the "root" head

  synth::RootOptions root;
  synth::CorpusOptions corpus;
  std::size_t pretrain_utts = 800;
  std::size_t source_utts = 400;
  std::size_t target_utts = 100;
  double target_valid_fraction = 0.2;
  double target_test_fraction = 0.5;
  std::vector<LanguageEntry> families{{"f1", "root", 0.5}};  // derived languages without a corpus
  std::vector<LanguageEntry> sources{{"s1", "f1", 0.25}, {"s2", "f1", 0.25}, {"s3", "f1", 0.25}};
  std::vector<LanguageEntry> targets{{"t1", "f1", 0.25}};

  Budget pretrain{30, 16, 3e-3, 0};
  Budget source_head{5, 16, 3e-3, 0};
  Budget source_adapter{10, 16, 3e-3, 0};
  Budget target_head{100, 8, 3e-3, 10};
  Budget target_adapter{100, 8, 3e-3, 10};
  Budget target_fusion{100, 8, 3e-3, 10};
  Budget target_full{100, 8, 1e-3, 10};
  std::size_t warmup_steps = 0;
  double l2 = 1e-4;

  std::size_t beam = 4;
  std::size_t max_decode_len = 0;

  void validate() const {
    backbone.validate();
    if (backbone.vocab_size != vocab::kFirstLabel + root.alphabet_size)
      throw ConfigError("config: backbone.vocab_size must equal 3 + root.alphabet_size");
    if (backbone.feature_dim != root.feature_dim)
      throw ConfigError("config: backbone.feature_dim must equal root.feature_dim");
    if (!known_strategy(strategy)) throw ConfigError("config: unknown strategy '" + strategy + "'");
    if (!(loss.lambda >= 0 && loss.lambda <= 1)) throw ConfigError("config: lambda must lie in [0, 1]");
    if (loss.eta < 0 || loss.gamma < 0) throw ConfigError("config: eta and gamma must be non-negative");
    if (!(fusion.init.temperature > 0)) throw ConfigError("config: temperature must be positive");
    if (!(meta.inner_lr > 0) || !(meta.meta_step > 0) || meta.inner_steps == 0)
      throw ConfigError("config: meta settings need inner_lr > 0, meta_step > 0, inner_steps >= 1");
    if (meta.order != "first" && meta.order != "second")
      throw ConfigError("config: meta.order must be 'first' or 'second'");
    if (meta.inner_optimizer != "sgd" && meta.inner_optimizer != "adam")
      throw ConfigError("config: meta.inner_optimizer must be 'sgd' or 'adam'");
    if (meta.episode_size < 2) throw ConfigError("config: meta.episode_size must be at least 2");
    if (sources.empty() || targets.empty()) throw ConfigError("config: need sources and targets");
    std::set<std::string> ids{"root", "meta", "mol"};
    for (const auto* list : {&families, &sources, &targets})
      for (const auto& l : *list) {
        if (l.id.empty() || l.id.find_first_of(":/. ") != std::string::npos)
          throw ConfigError("config: bad language id '" + l.id + "'");
        if (!ids.insert(l.id).second) throw ConfigError("config: duplicate or reserved language id '" + l.id + "'");
      }
    if (head_init != "random" && head_init != "root")
      throw ConfigError("config: head_init must be 'random' or 'root'");
    if (beam == 0) throw ConfigError("config: beam must be >= 1");
  }

  fusion::FusionPlan fusion_plan(const std::string& target) const {
    fusion::FusionPlan p;
    for (const auto& s : sources) p.languages.push_back(s.id);
    if (fusion.include_target) p.languages.push_back(target);
    p.target = target;
    p.encoder_layers = fusion.encoder_layers < 0 ? backbone.num_encoder_layers : std::size_t(fusion.encoder_layers);
    p.decoder_layers = fusion.decoder_layers < 0 ? backbone.num_decoder_layers : std::size_t(fusion.decoder_layers);
    return p;
  }

  metalearn::InnerOptions inner_options() const {
    return {meta.inner_lr, meta.inner_steps,
            meta.inner_optimizer == "sgd" ? metalearn::InnerOptimizer::kSgd
                                          : metalearn::InnerOptimizer::kAdamNoMomentum};
  }

  backbone::DecodeOptions decode_options() const { return {loss.lambda, beam, max_decode_len}; }

  FitOptions fit_options(const Budget& b, const std::string& tag, double l2_weight = 0.0) const {
    FitOptions f;
    f.epochs = b.epochs;
    f.batch_size = b.batch_size;
    f.lr = b.lr;
    f.patience = b.patience;
    f.l2 = l2_weight;
    f.warmup_steps = warmup_steps;
    f.seed = derive_seed(seed, tag);
    return f;
  }
};

namespace detail {

/// Reads known keys and rejects the rest.
class Strict {
 public:
  Strict(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("config: " + where_ + " must be an object");
  }
  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: " + where_ + "." + key + ": " + e.what());
    }
  }
  const nlohmann::json* sub(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError("config: unknown key '" + where_ + "." + k + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline nlohmann::json budget_json(const Budget& b) {
  return {{"epochs", b.epochs}, {"batch_size", b.batch_size}, {"lr", b.lr}, {"patience", b.patience}};
}
inline void read_budget(const nlohmann::json& j, const std::string& where, Budget& b) {
  Strict s(j, where);
  s.get("epochs", b.epochs);
  s.get("batch_size", b.batch_size);
  s.get("lr", b.lr);
  s.get("patience", b.patience);
  s.finish();
}

inline nlohmann::json languages_json(const std::vector<LanguageEntry>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& l : v) a.push_back({{"id", l.id}, {"base", l.base}, {"delta", l.delta}});
  return a;
}
inline void read_languages(const nlohmann::json& j, const std::string& where, std::vector<LanguageEntry>& v) {
  if (!j.is_array()) throw ConfigError("config: " + where + " must be an array");
  v.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    LanguageEntry l;
    Strict s(j[i], where + "[" + std::to_string(i) + "]");
    s.get("id", l.id);
    s.get("base", l.base);
    s.get("delta", l.delta);
    s.finish();
    v.push_back(l);
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  const auto& b = c.backbone;
  json j;
  j["seed"] = c.seed;
  j["backbone_seed"] = c.backbone_seed;
  j["root_seed"] = c.root_seed;
  j["strategy"] = c.strategy;
  j["backbone"] = {{"num_encoder_layers", b.num_encoder_layers}, {"num_decoder_layers", b.num_decoder_layers},
                   {"model_dim", b.model_dim}, {"ff_dim", b.ff_dim}, {"num_heads", b.num_heads},
                   {"vocab_size", b.vocab_size}, {"feature_dim", b.feature_dim},
                   {"subsample_factor", b.subsample_factor}};
  j["adapter"] = {{"bottleneck_dim", c.adapter.bottleneck_dim}, {"init_bound", c.adapter.init_bound}};
  j["fusion"] = {{"temperature", c.fusion.init.temperature}, {"qk_init_bound", c.fusion.init.qk_init_bound},
                 {"value_off_diagonal", c.fusion.init.value_off_diagonal},
                 {"encoder_layers", c.fusion.encoder_layers}, {"decoder_layers", c.fusion.decoder_layers},
                 {"include_target", c.fusion.include_target}};
  j["loss"] = {{"lambda", c.loss.lambda}, {"eta", c.loss.eta}, {"gamma", c.loss.gamma}};
  j["meta"] = {{"inner_lr", c.meta.inner_lr}, {"meta_step", c.meta.meta_step}, {"epochs", c.meta.epochs},
               {"inner_steps", c.meta.inner_steps}, {"steps_per_epoch", c.meta.steps_per_epoch},
               {"episode_size", c.meta.episode_size}, {"train_fraction", c.meta.train_fraction},
               {"order", c.meta.order}, {"inner_optimizer", c.meta.inner_optimizer}};
  j["mol_epochs"] = c.mol_epochs;
  j["head_init"] = c.head_init;
  j["root"] = c.root;
  j["corpus"] = {{"min_len", c.corpus.min_len}, {"max_len", c.corpus.max_len},
                 {"valid_fraction", c.corpus.valid_fraction}, {"test_fraction", c.corpus.test_fraction}};
  j["pretrain_utts"] = c.pretrain_utts;
  j["source_utts"] = c.source_utts;
  j["target_utts"] = c.target_utts;
  j["target_valid_fraction"] = c.target_valid_fraction;
  j["target_test_fraction"] = c.target_test_fraction;
  j["families"] = detail::languages_json(c.families);
  j["sources"] = detail::languages_json(c.sources);
  j["targets"] = detail::languages_json(c.targets);
  j["budgets"] = {{"pretrain", detail::budget_json(c.pretrain)},
                  {"source_head", detail::budget_json(c.source_head)},
                  {"source_adapter", detail::budget_json(c.source_adapter)},
                  {"target_head", detail::budget_json(c.target_head)},
                  {"target_adapter", detail::budget_json(c.target_adapter)},
                  {"target_fusion", detail::budget_json(c.target_fusion)},
                  {"target_full", detail::budget_json(c.target_full)}};
  j["warmup_steps"] = c.warmup_steps;
  j["l2"] = c.l2;
  j["beam"] = c.beam;
  j["max_decode_len"] = c.max_decode_len;
  return j;
}

/// Missing keys keep their defaults; unknown keys are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::Strict s(j, "config");
  s.get("seed", c.seed);
  s.get("backbone_seed", c.backbone_seed);
  s.get("root_seed", c.root_seed);
  s.get("strategy", c.strategy);
  if (const auto* b = s.sub("backbone")) {
    detail::Strict t(*b, "backbone");
    auto& bb = c.backbone;
    t.get("num_encoder_layers", bb.num_encoder_layers);
    t.get("num_decoder_layers", bb.num_decoder_layers);
    t.get("model_dim", bb.model_dim);
    t.get("ff_dim", bb.ff_dim);
    t.get("num_heads", bb.num_heads);
    t.get("vocab_size", bb.vocab_size);
    t.get("feature_dim", bb.feature_dim);
    t.get("subsample_factor", bb.subsample_factor);
    t.finish();
  }
  if (const auto* a = s.sub("adapter")) {
    detail::Strict t(*a, "adapter");
    t.get("bottleneck_dim", c.adapter.bottleneck_dim);
    t.get("init_bound", c.adapter.init_bound);
    t.finish();
  }
  if (const auto* f = s.sub("fusion")) {
    detail::Strict t(*f, "fusion");
    t.get("temperature", c.fusion.init.temperature);
    t.get("qk_init_bound", c.fusion.init.qk_init_bound);
    t.get("value_off_diagonal", c.fusion.init.value_off_diagonal);
    t.get("encoder_layers", c.fusion.encoder_layers);
    t.get("decoder_layers", c.fusion.decoder_layers);
    t.get("include_target", c.fusion.include_target);
    t.finish();
  }
  if (const auto* l = s.sub("loss")) {
    detail::Strict t(*l, "loss");
    t.get("lambda", c.loss.lambda);
    t.get("eta", c.loss.eta);
    t.get("gamma", c.loss.gamma);
    t.finish();
  }
  if (const auto* m = s.sub("meta")) {
    detail::Strict t(*m, "meta");
    t.get("inner_lr", c.meta.inner_lr);
    t.get("meta_step", c.meta.meta_step);
    t.get("epochs", c.meta.epochs);
    t.get("inner_steps", c.meta.inner_steps);
    t.get("steps_per_epoch", c.meta.steps_per_epoch);
    t.get("episode_size", c.meta.episode_size);
    t.get("train_fraction", c.meta.train_fraction);
    t.get("order", c.meta.order);
    t.get("inner_optimizer", c.meta.inner_optimizer);
    t.finish();
  }
  s.get("mol_epochs", c.mol_epochs);
  s.get("head_init", c.head_init);
  if (const auto* r = s.sub("root")) {
    detail::Strict t(*r, "root");
    t.get("alphabet_size", c.root.alphabet_size);
    t.get("frames_per_token", c.root.frames_per_token);
    t.get("feature_dim", c.root.feature_dim);
    t.get("pool_size", c.root.pool_size);
    t.get("noise", c.root.noise);
    t.finish();
  }
  if (const auto* r = s.sub("corpus")) {
    detail::Strict t(*r, "corpus");
    t.get("min_len", c.corpus.min_len);
    t.get("max_len", c.corpus.max_len);
    t.get("valid_fraction", c.corpus.valid_fraction);
    t.get("test_fraction", c.corpus.test_fraction);
    t.finish();
  }
  s.get("pretrain_utts", c.pretrain_utts);
  s.get("source_utts", c.source_utts);
  s.get("target_utts", c.target_utts);
  s.get("target_valid_fraction", c.target_valid_fraction);
  s.get("target_test_fraction", c.target_test_fraction);
  if (const auto* v = s.sub("families")) detail::read_languages(*v, "families", c.families);
  if (const auto* v = s.sub("sources")) detail::read_languages(*v, "sources", c.sources);
  if (const auto* v = s.sub("targets")) detail::read_languages(*v, "targets", c.targets);
  if (const auto* b = s.sub("budgets")) {
    detail::Strict t(*b, "budgets");
    const std::pair<const char*, Budget*> slots[] = {
        {"pretrain", &c.pretrain},           {"source_head", &c.source_head},
        {"source_adapter", &c.source_adapter}, {"target_head", &c.target_head},
        {"target_adapter", &c.target_adapter}, {"target_fusion", &c.target_fusion},
        {"target_full", &c.target_full}};
    for (const auto& [key, slot] : slots)
      if (const auto* x = t.sub(key)) detail::read_budget(*x, std::string("budgets.") + key, *slot);
    t.finish();
  }
  s.get("warmup_steps", c.warmup_steps);
  s.get("l2", c.l2);
  s.get("beam", c.beam);
  s.get("max_decode_len", c.max_decode_len);
  s.finish();
  c.corpus.subsample_factor = c.backbone.subsample_factor;
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path);
  try {
    return config_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
}

}  // namespace xadapt::harness
