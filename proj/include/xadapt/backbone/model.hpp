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
#include <string>
#include <vector>

#include "xadapt/data.hpp"
#include "xadapt/diffcalc/params.hpp"
#include "xadapt/diffcalc/tape.hpp"
#include "xadapt/random.hpp"

namespace xadapt::backbone {

using dc::Tape;
using dc::Tensor;

struct BackboneConfig {
  std::size_t num_encoder_layers = 4;
  std::size_t num_decoder_layers = 2;
  std::size_t model_dim = 32;
  std::size_t ff_dim = 64;
  std::size_t num_heads = 2;
  std::size_t vocab_size = 15;  // blank, sos, eos + 12 labels
  std::size_t feature_dim = 8;
  std::size_t subsample_factor = 2;

  std::size_t num_hook_points() const { return num_encoder_layers + num_decoder_layers; }
  std::size_t subsampled_frames(std::size_t frames) const {
    return (frames + subsample_factor - 1) / subsample_factor;
  }
  // The convolution window spans one frame either side of each stride.
  std::size_t subsample_window() const { return subsample_factor + 1; }

  void validate() const {
    if (model_dim == 0 || num_heads == 0 || model_dim % num_heads != 0)
      throw Error("backbone config: model_dim must be a positive multiple of num_heads");
    if (vocab_size <= static_cast<std::size_t>(vocab::kFirstLabel))
      throw Error("backbone config: vocab must hold blank, sos, eos and at least one label");
    if (subsample_factor == 0 || feature_dim == 0 || ff_dim == 0)
      throw Error("backbone config: zero-sized dimension");
  }

  bool operator==(const BackboneConfig&) const = default;
};

/// Where a hook fires: after the feed-forward sublayer of one layer.
/// `global` numbers encoder layers first, then decoder layers.
struct HookPoint {
  bool decoder = false;
  std::size_t layer = 0;
  std::size_t global = 0;
};

/// Something attached after each layer (an adapter stack, a fusion block).
template <class T>
class LayerHook {
 public:
  virtual ~LayerHook() = default;
  virtual Tensor<T> apply(Tape<T>& tp, const Tensor<T>& z, const HookPoint& at) const = 0;
};

namespace detail {

template <class T>
struct Linear {
  Tensor<T> w;  // [in x out]
  Tensor<T> b;  // [out], may be undefined

  Tensor<T> operator()(Tape<T>& tp, const Tensor<T>& x) const {
    Tensor<T> y = dc::matmul(tp, x, w);
    return b.defined() ? dc::add_bias(tp, y, b) : y;
  }
};

template <class T>
struct Norm {
  Tensor<T> g, b;
  Tensor<T> operator()(Tape<T>& tp, const Tensor<T>& x) const {
    return dc::layer_norm(tp, x, g, b);
  }
};

template <class T>
struct Attention {
  Linear<T> q, k, v, o;
  std::size_t heads = 1;

  Tensor<T> operator()(Tape<T>& tp, const Tensor<T>& query, const Tensor<T>& memory,
                       bool causal) const {
    const Tensor<T> Q = q(tp, query), K = k(tp, memory), V = v(tp, memory);
    const std::size_t d = Q.cols(), dh = d / heads;
    const T scale = T(1) / std::sqrt(T(dh));
    std::vector<Tensor<T>> parts;
    parts.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t lo = h * dh, hi = lo + dh;
      Tensor<T> s = dc::scale(tp, dc::matmul_bt(tp, dc::slice_cols(tp, Q, lo, hi),
                                                dc::slice_cols(tp, K, lo, hi)),
                              scale);
      Tensor<T> p = causal ? dc::causal_softmax(tp, s) : dc::softmax(tp, s);
      parts.push_back(dc::matmul(tp, p, dc::slice_cols(tp, V, lo, hi)));
    }
    return o(tp, heads == 1 ? parts[0] : dc::concat_cols(tp, parts));
  }
};

template <class T>
struct FeedForward {
  Linear<T> in, out;
  Tensor<T> operator()(Tape<T>& tp, const Tensor<T>& x) const {
    return out(tp, dc::relu(tp, in(tp, x)));
  }
};

template <class T>
struct EncoderLayer {
  Norm<T> ln_attn, ln_ff;
  Attention<T> attn;
  FeedForward<T> ff;
};

template <class T>
struct DecoderLayer {
  Norm<T> ln_self, ln_cross, ln_ff;
  Attention<T> self_attn, cross_attn;
  FeedForward<T> ff;
};

inline void add_uniform(ParamSet<double>& ps, const std::string& name, const std::string& part,
                        std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  ps.add(name, part, Tensor<double>({rows, cols}, std::move(v)));
}

inline void add_linear(ParamSet<double>& ps, const std::string& prefix, const std::string& part,
                       std::size_t in, std::size_t out, Rng& rng, bool bias = true) {
  add_uniform(ps, prefix + ".w", part, in, out, std::sqrt(6.0 / double(in + out)), rng);
  if (bias) ps.add(prefix + ".b", part, Tensor<double>::zeros({out}));
}

inline void add_norm(ParamSet<double>& ps, const std::string& prefix, const std::string& part,
                     std::size_t dim) {
  ps.add(prefix + ".g", part, Tensor<double>({dim}, std::vector<double>(dim, 1.0)));
  ps.add(prefix + ".b", part, Tensor<double>::zeros({dim}));
}

inline void add_attention(ParamSet<double>& ps, const std::string& prefix, const std::string& part,
                          std::size_t d, Rng& rng) {
  for (const char* n : {".q", ".k", ".v", ".o"}) add_linear(ps, prefix + n, part, d, d, rng);
}

template <class T>
Linear<T> bind_linear(ParamSet<T>& ps, const std::string& prefix) {
  Linear<T> l{ps.get(prefix + ".w"), {}};
  if (ps.contains(prefix + ".b")) l.b = ps.get(prefix + ".b");
  return l;
}

template <class T>
Norm<T> bind_norm(ParamSet<T>& ps, const std::string& prefix) {
  return {ps.get(prefix + ".g"), ps.get(prefix + ".b")};
}

template <class T>
Attention<T> bind_attention(ParamSet<T>& ps, const std::string& prefix, std::size_t heads) {
  return {bind_linear(ps, prefix + ".q"), bind_linear(ps, prefix + ".k"),
          bind_linear(ps, prefix + ".v"), bind_linear(ps, prefix + ".o"), heads};
}

}  // namespace detail

/// Sinusoidal position table [positions x dim].
template <class T>
Tensor<T> positional_encoding(std::size_t positions, std::size_t dim) {
  std::vector<T> v(positions * dim);
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, double(2 * (i / 2)) / double(dim));
      const double angle = double(p) / rate;
      v[p * dim + i] = T(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return Tensor<T>({positions, dim}, std::move(v));
}

/// Per-language output layers: decoder input embedding, attention-decoder
/// projection and CTC projection.
template <class T>
class LanguageHead {
 public:
  LanguageHead(ParamSet<T>& ps, const std::string& lang)
      : lang_(lang),
        embed_(ps.get(prefix(lang) + ".embed")),
        out_(detail::bind_linear(ps, prefix(lang) + ".out")),
        ctc_(detail::bind_linear(ps, prefix(lang) + ".ctc")) {}

  static std::string prefix(const std::string& lang) { return "head." + lang; }

  static bool exists(const ParamSet<T>& ps, const std::string& lang) {
    return ps.contains(prefix(lang) + ".embed");
  }

  static void init(ParamSet<double>& ps, const BackboneConfig& cfg, const std::string& lang,
                   Rng& rng) {
    const std::string part = partition::head(lang);
    detail::add_uniform(ps, prefix(lang) + ".embed", part, cfg.vocab_size, cfg.model_dim, 1.0, rng);
    detail::add_linear(ps, prefix(lang) + ".out", part, cfg.model_dim, cfg.vocab_size, rng);
    detail::add_linear(ps, prefix(lang) + ".ctc", part, cfg.model_dim, cfg.vocab_size, rng);
  }

  const std::string& language() const { return lang_; }
  const Tensor<T>& embedding() const { return embed_; }
  Tensor<T> project(Tape<T>& tp, const Tensor<T>& x) const { return out_(tp, x); }
  Tensor<T> project_ctc(Tape<T>& tp, const Tensor<T>& x) const { return ctc_(tp, x); }

 private:
  std::string lang_;
  Tensor<T> embed_;
  detail::Linear<T> out_, ctc_;
};

/// Miniature encoder-decoder transformer (pre-norm) with a strided
/// convolutional front end. All parameters live in the "backbone" partition.
template <class T>
class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, ParamSet<T>& ps) : cfg_(cfg) {
    cfg_.validate();
    sub_ = detail::bind_linear(ps, "backbone.sub");
    for (std::size_t l = 0; l < cfg_.num_encoder_layers; ++l) {
      const std::string p = "backbone.enc." + std::to_string(l);
      enc_.push_back({detail::bind_norm(ps, p + ".ln_attn"), detail::bind_norm(ps, p + ".ln_ff"),
                      detail::bind_attention(ps, p + ".attn", cfg_.num_heads),
                      {detail::bind_linear(ps, p + ".ff.in"), detail::bind_linear(ps, p + ".ff.out")}});
    }
    enc_norm_ = detail::bind_norm(ps, "backbone.enc_norm");
    for (std::size_t l = 0; l < cfg_.num_decoder_layers; ++l) {
      const std::string p = "backbone.dec." + std::to_string(l);
      dec_.push_back({detail::bind_norm(ps, p + ".ln_self"), detail::bind_norm(ps, p + ".ln_cross"),
                      detail::bind_norm(ps, p + ".ln_ff"),
                      detail::bind_attention(ps, p + ".self_attn", cfg_.num_heads),
                      detail::bind_attention(ps, p + ".cross_attn", cfg_.num_heads),
                      {detail::bind_linear(ps, p + ".ff.in"), detail::bind_linear(ps, p + ".ff.out")}});
    }
    dec_norm_ = detail::bind_norm(ps, "backbone.dec_norm");
  }

  static void init(ParamSet<double>& ps, const BackboneConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::string part = partition::kBackbone;
    const std::size_t d = cfg.model_dim;
    detail::add_linear(ps, "backbone.sub", part, cfg.subsample_window() * cfg.feature_dim, d, rng);
    for (std::size_t l = 0; l < cfg.num_encoder_layers; ++l) {
      const std::string p = "backbone.enc." + std::to_string(l);
      detail::add_norm(ps, p + ".ln_attn", part, d);
      detail::add_norm(ps, p + ".ln_ff", part, d);
      detail::add_attention(ps, p + ".attn", part, d, rng);
      detail::add_linear(ps, p + ".ff.in", part, d, cfg.ff_dim, rng);
      detail::add_linear(ps, p + ".ff.out", part, cfg.ff_dim, d, rng);
    }
    detail::add_norm(ps, "backbone.enc_norm", part, d);
    for (std::size_t l = 0; l < cfg.num_decoder_layers; ++l) {
      const std::string p = "backbone.dec." + std::to_string(l);
      detail::add_norm(ps, p + ".ln_self", part, d);
      detail::add_norm(ps, p + ".ln_cross", part, d);
      detail::add_norm(ps, p + ".ln_ff", part, d);
      detail::add_attention(ps, p + ".self_attn", part, d, rng);
      detail::add_attention(ps, p + ".cross_attn", part, d, rng);
      detail::add_linear(ps, p + ".ff.in", part, d, cfg.ff_dim, rng);
      detail::add_linear(ps, p + ".ff.out", part, cfg.ff_dim, d, rng);
    }
    detail::add_norm(ps, "backbone.dec_norm", part, d);
  }

  /// Names of the parameters belonging to the last decoder layer.
  static std::string last_decoder_prefix(const BackboneConfig& cfg) {
    return "backbone.dec." + std::to_string(cfg.num_decoder_layers - 1) + ".";
  }

  const BackboneConfig& config() const { return cfg_; }

  /// Encoder states [ceil(frames / subsample) x model_dim].
  Tensor<T> encode(Tape<T>& tp, const FeatureSequence& x, const LayerHook<T>* hook) const {
    if (x.frames == 0 || x.values.empty()) throw Error("encode: empty input");
    if (x.dim != cfg_.feature_dim)
      throw dc::ShapeError("encode", dc::Shape{x.frames, x.dim}, dc::Shape{x.frames, cfg_.feature_dim});
    for (double v : x.values)
      if (!std::isfinite(v)) throw NumericError("encode: non-finite input feature");
    const std::size_t f = cfg_.subsample_factor, win = cfg_.subsample_window();
    const std::size_t out_frames = cfg_.subsampled_frames(x.frames);
    // Window for output i covers input frames i*f - 1 .. i*f + f - 1, zero padded.
    std::vector<T> cols(out_frames * win * x.dim, T(0));
    for (std::size_t i = 0; i < out_frames; ++i)
      for (std::size_t w = 0; w < win; ++w) {
        const long src = long(i * f + w) - 1;
        if (src < 0 || src >= long(x.frames)) continue;
        for (std::size_t k = 0; k < x.dim; ++k)
          cols[(i * win + w) * x.dim + k] = T(x.at(std::size_t(src), k));
      }
    Tensor<T> h = dc::relu(tp, sub_(tp, Tensor<T>({out_frames, win * x.dim}, std::move(cols))));
    h = dc::add(tp, h, positional_encoding<T>(out_frames, cfg_.model_dim));
    for (std::size_t l = 0; l < enc_.size(); ++l) {
      const auto& L = enc_[l];
      const Tensor<T> n = L.ln_attn(tp, h);
      h = dc::add(tp, h, L.attn(tp, n, n, false));
      h = dc::add(tp, h, L.ff(tp, L.ln_ff(tp, h)));
      if (hook) h = hook->apply(tp, h, {false, l, l});
    }
    return enc_norm_(tp, h);
  }

  /// Decoder logits [inputs x vocab] under teacher forcing.
  Tensor<T> decode(Tape<T>& tp, const Tensor<T>& memory, std::span<const int> inputs,
                   const LanguageHead<T>& head, const LayerHook<T>* hook) const {
    Tensor<T> h = dc::embedding_lookup(tp, head.embedding(), inputs);
    h = dc::add(tp, h, positional_encoding<T>(inputs.size(), cfg_.model_dim));
    for (std::size_t l = 0; l < dec_.size(); ++l) {
      const auto& L = dec_[l];
      Tensor<T> n = L.ln_self(tp, h);
      h = dc::add(tp, h, L.self_attn(tp, n, n, true));
      h = dc::add(tp, h, L.cross_attn(tp, L.ln_cross(tp, h), memory, false));
      h = dc::add(tp, h, L.ff(tp, L.ln_ff(tp, h)));
      if (hook) h = hook->apply(tp, h, {true, l, cfg_.num_encoder_layers + l});
    }
    return head.project(tp, dec_norm_(tp, h));
  }

  /// Frame-level CTC log-posteriors [frames' x vocab].
  Tensor<T> ctc_log_probs(Tape<T>& tp, const Tensor<T>& memory, const LanguageHead<T>& head) const {
    return dc::log_softmax(tp, head.project_ctc(tp, memory));
  }

 private:
  BackboneConfig cfg_;
  detail::Linear<T> sub_;
  std::vector<detail::EncoderLayer<T>> enc_;
  std::vector<detail::DecoderLayer<T>> dec_;
  detail::Norm<T> enc_norm_, dec_norm_;
};

}  // namespace xadapt::backbone
