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

#include <span>
#include <vector>

#include "xadapt/backbone/ctc.hpp"
#include "xadapt/backbone/model.hpp"

namespace xadapt::backbone {

template <class T>
struct AsrLoss {
  Tensor<T> total;
  Tensor<T> att;
  Tensor<T> ctc;
};

/// (1 - lambda) * att + lambda * ctc, exact at both endpoints.
template <class T>
Tensor<T> mix_losses(Tape<T>& tp, const Tensor<T>& att, const Tensor<T>& ctc, T lambda) {
  if (!(lambda >= T(0) && lambda <= T(1))) throw Error("asr_loss: lambda must lie in [0, 1]");
  if (lambda == T(0)) return att;
  if (lambda == T(1)) return ctc;
  return dc::combine(tp, {{T(1) - lambda, att}, {lambda, ctc}});
}

/// Decoder input and output sequences for teacher forcing.
inline std::vector<int> decoder_inputs(std::span<const int> tokens) {
  std::vector<int> in{vocab::kSos};
  in.insert(in.end(), tokens.begin(), tokens.end());
  return in;
}
inline std::vector<int> decoder_targets(std::span<const int> tokens) {
  std::vector<int> out(tokens.begin(), tokens.end());
  out.push_back(vocab::kEos);
  return out;
}

/// Summed attention-decoder negative log-likelihood of one utterance.
template <class T>
Tensor<T> attention_nll(Tape<T>& tp, const Backbone<T>& model, const LanguageHead<T>& head,
                        const Tensor<T>& memory, std::span<const int> tokens,
                        const LayerHook<T>* hook) {
  const auto in = decoder_inputs(tokens);
  const auto out = decoder_targets(tokens);
  Tensor<T> logp = dc::log_softmax(tp, model.decode(tp, memory, in, head, hook));
  return dc::scale(tp, dc::sum(tp, dc::pick(tp, logp, std::span<const int>(out))), T(-1));
}

/// Batch-mean joint CTC-attention loss.
template <class T>
AsrLoss<T> asr_loss(Tape<T>& tp, const Backbone<T>& model, const LanguageHead<T>& head,
                    const TaskBatch& batch, T lambda, const LayerHook<T>* hook = nullptr) {
  if (batch.empty()) throw Error("asr_loss: empty batch");
  if (!(lambda >= T(0) && lambda <= T(1))) throw Error("asr_loss: lambda must lie in [0, 1]");
  Tensor<T> att, ctc;  // running sums
  for (const auto& u : batch) {
    if (u.tokens.empty()) throw Error("asr_loss: utterance '" + u.utt_id + "' has an empty target");
    const std::size_t frames = model.config().subsampled_frames(u.features.frames);
    if (ctc_min_frames(u.tokens) > frames)
      throw InfeasibleTarget("asr_loss: utterance '" + u.utt_id + "' needs " +
                             std::to_string(ctc_min_frames(u.tokens)) + " encoder frames, has " +
                             std::to_string(frames));
    const Tensor<T> memory = model.encode(tp, u.features, hook);
    Tensor<T> a = attention_nll(tp, model, head, memory, u.tokens, hook);
    Tensor<T> c = ctc_loss(tp, model.ctc_log_probs(tp, memory, head), u.tokens);
    att = att.defined() ? dc::add(tp, att, a) : a;
    ctc = ctc.defined() ? dc::add(tp, ctc, c) : c;
  }
  const T inv = T(1) / T(batch.size());
  AsrLoss<T> r;
  r.att = dc::scale(tp, att, inv);
  r.ctc = dc::scale(tp, ctc, inv);
  r.total = mix_losses(tp, r.att, r.ctc, lambda);
  return r;
}

}  // namespace xadapt::backbone
