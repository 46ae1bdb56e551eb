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
#include <cmath>
#include <limits>
#include <vector>

#include "xadapt/backbone/ctc.hpp"
#include "xadapt/backbone/loss.hpp"
#include "xadapt/backbone/model.hpp"

namespace xadapt::backbone {

/// Incremental CTC prefix probabilities over fixed frame posteriors.
///
/// For a prefix g the state holds, per frame t, the log-probability that
/// frames 0..t emit exactly g and end in a label (r_n) or in a blank (r_b).
/// The prefix score psi(g) is log P(g is a prefix of the output).
class CtcPrefixScorer {
 public:
  struct State {
    std::vector<double> r_n, r_b;
    double psi = 0.0;
    int last = -1;
  };

  /// `log_probs` holds [frames x vocab] row-major log-posteriors.
  CtcPrefixScorer(std::vector<double> log_probs, std::size_t frames, std::size_t vocab)
      : y_(std::move(log_probs)), T_(frames), V_(vocab) {
    if (T_ == 0 || y_.size() != T_ * V_) throw dc::ShapeError("ctc_prefix", "bad posterior table");
  }

  std::size_t frames() const { return T_; }

  State initial() const {
    State s;
    s.r_n.assign(T_, kNegInf);
    s.r_b.assign(T_, kNegInf);
    double acc = 0.0;
    for (std::size_t t = 0; t < T_; ++t) {
      acc += y(t, vocab::kBlank);
      s.r_b[t] = acc;
    }
    s.psi = 0.0;
    return s;
  }

  /// State of g + c.
  State extend(const State& g, int c) const {
    State h;
    h.r_n.assign(T_, kNegInf);
    h.r_b.assign(T_, kNegInf);
    h.last = c;
    const bool empty = g.last < 0;
    h.r_n[0] = empty ? y(0, c) : kNegInf;
    double psi = h.r_n[0];
    for (std::size_t t = 1; t < T_; ++t) {
      const double phi = log_add(g.r_b[t - 1], c == g.last ? kNegInf : g.r_n[t - 1]);
      h.r_n[t] = log_add(h.r_n[t - 1], phi) + y(t, c);
      h.r_b[t] = log_add(h.r_b[t - 1], h.r_n[t - 1]) + y(t, vocab::kBlank);
      psi = log_add(psi, phi + y(t, c));
    }
    h.psi = psi;
    return h;
  }

  /// log P(output == g).
  double full(const State& g) const { return log_add(g.r_n[T_ - 1], g.r_b[T_ - 1]); }

 private:
  static constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double y(std::size_t t, int k) const { return y_[t * V_ + static_cast<std::size_t>(k)]; }

  std::vector<double> y_;
  std::size_t T_, V_;
};

struct DecodeOptions {
  double lambda = 0.3;
  std::size_t beam = 4;
  std::size_t max_len = 0;  // 0: number of encoder frames
};

struct DecodeResult {
  TokenSequence tokens;
  double score = 0.0;
};

/// (1 - lambda) * att + lambda * ctc without evaluating 0 * -inf.
inline double joint_score(double att, double ctc, double lambda) {
  if (lambda == 0.0) return att;
  if (lambda == 1.0) return ctc;
  return (1.0 - lambda) * att + lambda * ctc;
}

/// Beam search over the attention decoder, ranking hypotheses by the joint
/// attention / CTC-prefix score. Ended hypotheses score with the full CTC
/// probability, so the final ranking is the joint sequence objective.
template <class T>
DecodeResult joint_decode(const Backbone<T>& model, const LanguageHead<T>& head,
                          const FeatureSequence& features, const DecodeOptions& opt,
                          const LayerHook<T>* hook = nullptr) {
  if (opt.beam < 1) throw Error("joint_decode: beam must be >= 1");
  if (!(opt.lambda >= 0.0 && opt.lambda <= 1.0)) throw Error("joint_decode: lambda must lie in [0, 1]");
  Tape<T> tp(false);
  const Tensor<T> memory = model.encode(tp, features, hook);
  const Tensor<T> ctc_lp = model.ctc_log_probs(tp, memory, head);
  const std::size_t V = ctc_lp.cols();
  CtcPrefixScorer scorer(std::vector<double>(ctc_lp.values().begin(), ctc_lp.values().end()),
                         ctc_lp.rows(), V);
  const std::size_t max_len = opt.max_len ? opt.max_len : scorer.frames();
  const bool use_ctc = opt.lambda > 0.0;

  struct Hyp {
    TokenSequence tokens;
    double att = 0.0;
    CtcPrefixScorer::State ctc;
    double score = 0.0;
  };
  auto better = [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  };

  std::vector<Hyp> live{{{}, 0.0, use_ctc ? scorer.initial() : CtcPrefixScorer::State{}, 0.0}};
  std::vector<DecodeResult> ended;
  auto best_ended = [&] {
    double b = -std::numeric_limits<double>::infinity();
    for (const auto& e : ended) b = std::max(b, e.score);
    return b;
  };

  for (std::size_t step = 0; !live.empty(); ++step) {
    std::vector<Hyp> next;
    std::vector<DecodeResult> finished;
    for (const auto& h : live) {
      const auto inputs = decoder_inputs(h.tokens);
      Tensor<T> logits = model.decode(tp, memory, inputs, head, hook);
      Tensor<T> lp = dc::log_softmax(tp, logits);
      const std::size_t row = inputs.size() - 1;
      auto att_of = [&](int k) { return h.att + static_cast<double>(lp.at(row, k)); };

      const double eos_ctc = use_ctc ? scorer.full(h.ctc) : 0.0;
      finished.push_back({h.tokens, joint_score(att_of(vocab::kEos), eos_ctc, opt.lambda)});
      if (h.tokens.size() >= max_len) continue;  // forced end
      for (int k = vocab::kFirstLabel; k < static_cast<int>(V); ++k) {
        Hyp c;
        c.tokens = h.tokens;
        c.tokens.push_back(k);
        c.att = att_of(k);
        if (use_ctc) c.ctc = scorer.extend(h.ctc, k);
        c.score = joint_score(c.att, use_ctc ? c.ctc.psi : 0.0, opt.lambda);
        next.push_back(std::move(c));
      }
    }
    std::sort(next.begin(), next.end(), better);
    // An ended hypothesis survives if it would have made the beam.
    const double threshold =
        next.size() > opt.beam ? next[opt.beam - 1].score : -std::numeric_limits<double>::infinity();
    for (auto& f : finished)
      if (f.score >= threshold && std::isfinite(f.score)) ended.push_back(std::move(f));
    if (next.size() > opt.beam) next.resize(opt.beam);
    while (!next.empty() && !std::isfinite(next.back().score)) next.pop_back();
    live = std::move(next);
    // Scores never increase along an extension, so no live hypothesis can
    // overtake the best ended one.
    if (!ended.empty() && !live.empty() && best_ended() >= live.front().score) break;
  }
  if (ended.empty()) return {{}, -std::numeric_limits<double>::infinity()};
  return *std::min_element(ended.begin(), ended.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
}

}  // namespace xadapt::backbone
