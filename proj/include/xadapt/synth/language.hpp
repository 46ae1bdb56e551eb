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

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xadapt/backbone/ctc.hpp"
#include "xadapt/data.hpp"
#include "xadapt/random.hpp"

namespace xadapt::synth {

/// Shape of the shared prototype pool a family of languages draws from.
struct RootOptions {
  std::size_t alphabet_size = 12;
  std::size_t frames_per_token = 3;
  std::size_t feature_dim = 8;
  std::size_t pool_size = 24;  // prototype sequences available for mutation
  double noise = 0.1;

  bool operator==(const RootOptions&) const = default;
};

/// A synthetic language: token t emits prototype sequence pool[assignment[t]].
struct LanguageSpec {
  std::string id;
  std::uint64_t root_seed = 0;
  std::uint64_t lang_seed = 0;
  double delta = 0.0;
  std::string base;  // id of the language it was derived from, empty for the root lineage
  RootOptions options;
  std::vector<int> assignment;     // token index -> pool index
  std::vector<double> prototypes;  // pool_size x frames_per_token x feature_dim

  std::size_t alphabet_size() const { return assignment.size(); }
  int label(std::size_t token_index) const { return vocab::kFirstLabel + static_cast<int>(token_index); }
  std::size_t vocab_size() const { return vocab::kFirstLabel + alphabet_size(); }

  /// Prototype frame f of token label `label` at feature k.
  double prototype(int label, std::size_t f, std::size_t k) const {
    const auto p = static_cast<std::size_t>(assignment.at(static_cast<std::size_t>(label - vocab::kFirstLabel)));
    return prototypes[(p * options.frames_per_token + f) * options.feature_dim + k];
  }

  bool operator==(const LanguageSpec&) const = default;
};

/// Unit-Gaussian prototype pool for a root seed.
inline std::vector<double> prototype_pool(std::uint64_t root_seed, const RootOptions& opt) {
  Rng rng(derive_seed(root_seed, "prototypes"));
  std::vector<double> pool(opt.pool_size * opt.frames_per_token * opt.feature_dim);
  for (auto& x : pool) x = rng.normal();
  return pool;
}

inline LanguageSpec root_language(std::uint64_t root_seed, const RootOptions& opt = {},
                                  std::string id = "root") {
  if (opt.alphabet_size == 0 || opt.pool_size < 2 * opt.alphabet_size)
    throw Error("root_language: pool must hold at least twice the alphabet");
  LanguageSpec s;
  s.id = std::move(id);
  s.root_seed = root_seed;
  s.options = opt;
  s.assignment.resize(opt.alphabet_size);
  for (std::size_t t = 0; t < opt.alphabet_size; ++t) s.assignment[t] = static_cast<int>(t);
  s.prototypes = prototype_pool(root_seed, opt);
  return s;
}

/// Remaps ceil(delta * alphabet) tokens of `base` to prototypes the language
/// does not use yet.
inline LanguageSpec derive_language(const LanguageSpec& base, double delta, std::uint64_t lang_seed,
                                    std::string id) {
  if (!(delta >= 0.0 && delta <= 1.0)) throw Error("derive_language: delta must lie in [0, 1]");
  LanguageSpec s = base;
  s.id = std::move(id);
  s.delta = delta;
  s.lang_seed = lang_seed;
  s.base = base.id;
  const std::size_t A = base.assignment.size();
  const auto m = static_cast<std::size_t>(std::ceil(delta * double(A) - 1e-12));
  Rng rng(derive_seed(lang_seed, "mutate"));
  std::vector<std::size_t> order(A);
  for (std::size_t i = 0; i < A; ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t t = order[j];
    const std::set<int> used(s.assignment.begin(), s.assignment.end());
    std::vector<int> free;
    for (int p = 0; p < static_cast<int>(s.options.pool_size); ++p)
      if (!used.contains(p) && p != base.assignment[t]) free.push_back(p);
    s.assignment[t] = free[rng.below(free.size())];
  }
  return s;
}

/// Language at distance delta from the root of `root_seed`.
inline LanguageSpec generate_language(std::uint64_t root_seed, double delta, std::uint64_t lang_seed,
                                      const RootOptions& opt = {}, std::string id = "") {
  if (id.empty()) id = "lang" + std::to_string(lang_seed);
  return derive_language(root_language(root_seed, opt), delta, lang_seed, std::move(id));
}

/// Fraction of tokens emitting identical prototype sequences.
inline double similarity(const LanguageSpec& a, const LanguageSpec& b) {
  if (a.assignment.size() != b.assignment.size() || a.root_seed != b.root_seed)
    throw Error("similarity: languages do not share a root");
  std::size_t same = 0;
  for (std::size_t t = 0; t < a.assignment.size(); ++t) same += a.assignment[t] == b.assignment[t];
  return double(same) / double(a.assignment.size());
}

struct CorpusOptions {
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  std::size_t subsample_factor = 2;  // sequences whose CTC alignment cannot fit are redrawn
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
};

struct Corpus {
  TaskBatch train, valid, test;
};

inline Utterance synthesize(const LanguageSpec& spec, const TokenSequence& tokens, std::string utt_id,
                            Rng& rng) {
  const auto& o = spec.options;
  Utterance u;
  u.utt_id = std::move(utt_id);
  u.tokens = tokens;
  u.features.frames = tokens.size() * o.frames_per_token;
  u.features.dim = o.feature_dim;
  u.features.values.reserve(u.features.frames * o.feature_dim);
  for (int tok : tokens)
    for (std::size_t f = 0; f < o.frames_per_token; ++f)
      for (std::size_t k = 0; k < o.feature_dim; ++k) {
        double v = spec.prototype(tok, f, k);
        if (o.noise > 0.0) v += o.noise * rng.normal();
        u.features.values.push_back(v);
      }
  return u;
}

/// Draws n utterances and splits them into train / valid / test.
inline Corpus sample_corpus(const LanguageSpec& spec, std::size_t n_utts, std::uint64_t split_seed,
                            const CorpusOptions& opt = {}) {
  if (n_utts < 3) throw Error("sample_corpus: need at least 3 utterances");
  if (opt.min_len == 0 || opt.min_len > opt.max_len) throw Error("sample_corpus: bad length range");
  Rng rng(derive_seed(split_seed, "corpus:" + spec.id));
  const std::size_t fpt = spec.options.frames_per_token;
  TaskBatch all;
  for (std::size_t i = 0; i < n_utts; ++i) {
    TokenSequence toks;
    do {
      const std::size_t len = opt.min_len + rng.below(opt.max_len - opt.min_len + 1);
      toks.resize(len);
      for (auto& t : toks) t = spec.label(rng.below(spec.alphabet_size()));
    } while (backbone::ctc_min_frames(toks) >
             (toks.size() * fpt + opt.subsample_factor - 1) / opt.subsample_factor);
    all.push_back(synthesize(spec, toks, spec.id + "-" + std::to_string(i), rng));
  }
  const auto part = [&](double f) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * double(n_utts))));
  };
  const std::size_t n_valid = part(opt.valid_fraction), n_test = part(opt.test_fraction);
  if (n_valid + n_test >= n_utts) throw Error("sample_corpus: splits leave no training data");
  Corpus c;
  const std::size_t n_train = n_utts - n_valid - n_test;
  c.train.assign(all.begin(), all.begin() + long(n_train));
  c.valid.assign(all.begin() + long(n_train), all.begin() + long(n_train + n_valid));
  c.test.assign(all.begin() + long(n_train + n_valid), all.end());
  return c;
}

/// sum_i w_i m_i / sum_i w_i
inline double weighted_average(const std::vector<double>& metrics, const std::vector<double>& sizes) {
  if (metrics.size() != sizes.size() || metrics.empty())
    throw Error("weighted_average: lists must be nonempty and of equal length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (!(sizes[i] > 0.0)) throw Error("weighted_average: sizes must be positive");
    num += sizes[i] * metrics[i];
    den += sizes[i];
  }
  return num / den;
}

inline void to_json(nlohmann::json& j, const RootOptions& o) {
  j = {{"alphabet_size", o.alphabet_size}, {"frames_per_token", o.frames_per_token},
       {"feature_dim", o.feature_dim}, {"pool_size", o.pool_size}, {"noise", o.noise}};
}
inline void from_json(const nlohmann::json& j, RootOptions& o) {
  j.at("alphabet_size").get_to(o.alphabet_size);
  j.at("frames_per_token").get_to(o.frames_per_token);
  j.at("feature_dim").get_to(o.feature_dim);
  j.at("pool_size").get_to(o.pool_size);
  j.at("noise").get_to(o.noise);
}

inline void to_json(nlohmann::json& j, const LanguageSpec& s) {
  j = {{"id", s.id},           {"root_seed", s.root_seed},   {"lang_seed", s.lang_seed},
       {"delta", s.delta},     {"base", s.base},             {"options", s.options},
       {"assignment", s.assignment}, {"prototypes", s.prototypes}};
}
inline void from_json(const nlohmann::json& j, LanguageSpec& s) {
  j.at("id").get_to(s.id);
  j.at("root_seed").get_to(s.root_seed);
  j.at("lang_seed").get_to(s.lang_seed);
  j.at("delta").get_to(s.delta);
  j.at("base").get_to(s.base);
  j.at("options").get_to(s.options);
  j.at("assignment").get_to(s.assignment);
  j.at("prototypes").get_to(s.prototypes);
}

}  // namespace xadapt::synth
