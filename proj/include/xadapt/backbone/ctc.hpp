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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "xadapt/data.hpp"
#include "xadapt/diffcalc/tape.hpp"

namespace xadapt::backbone {

class InfeasibleTarget : public Error {
 public:
  using Error::Error;
};

template <class T>
T log_add(T a, T b) {
  constexpr T ninf = -std::numeric_limits<T>::infinity();
  if (a == ninf) return b;
  if (b == ninf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

/// Minimum number of frames an alignment of `target` needs: one per label
/// plus a separating blank between equal neighbours.
inline std::size_t ctc_min_frames(std::span<const int> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

/// Negative log-likelihood of `target` under frame-level log-posteriors
/// [frames x vocab], summed over every blank-augmented alignment.
template <class T>
dc::Tensor<T> ctc_loss(dc::Tape<T>& tp, const dc::Tensor<T>& log_probs, std::span<const int> target) {
  using dc::Tensor;
  constexpr T ninf = -std::numeric_limits<T>::infinity();
  if (log_probs.rank() != 2) throw dc::ShapeError("ctc_loss", "expected [frames x vocab]");
  const std::size_t frames = log_probs.rows(), V = log_probs.cols();
  for (int c : target)
    if (c <= vocab::kBlank || static_cast<std::size_t>(c) >= V)
      throw dc::ShapeError("ctc_loss", "label " + std::to_string(c) + " outside vocab of " +
                                           std::to_string(V));
  const std::size_t need = ctc_min_frames(target);
  if (need > frames)
    throw InfeasibleTarget("ctc_loss: target needs " + std::to_string(need) + " frames, got " +
                           std::to_string(frames));

  const std::size_t S = 2 * target.size() + 1;
  auto label = [&](std::size_t s) { return s % 2 == 0 ? vocab::kBlank : target[s / 2]; };
  auto skip_ok = [&](std::size_t s) { return s >= 2 && s % 2 == 1 && label(s) != label(s - 2); };
  const auto y = log_probs.values();
  auto lp = [&](std::size_t t, std::size_t s) { return y[t * V + label(s)]; };

  std::vector<T> alpha(frames * S, ninf), beta(frames * S, ninf);
  alpha[0] = lp(0, 0);
  if (S > 1) alpha[1] = lp(0, 1);
  for (std::size_t t = 1; t < frames; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      T a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (skip_ok(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a == ninf ? ninf : a + lp(t, s);
    }
  // beta excludes the emission at its own frame.
  const std::size_t last = frames - 1;
  beta[last * S + S - 1] = 0;
  if (S > 1) beta[last * S + S - 2] = 0;
  for (std::size_t t = last; t-- > 0;)
    for (std::size_t s = 0; s < S; ++s) {
      T b = beta[(t + 1) * S + s] + lp(t + 1, s);
      if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1] + lp(t + 1, s + 1));
      if (s + 2 < S && skip_ok(s + 2)) b = log_add(b, beta[(t + 1) * S + s + 2] + lp(t + 1, s + 2));
      beta[t * S + s] = b;
    }
  T log_p = alpha[last * S + S - 1];
  if (S > 1) log_p = log_add(log_p, alpha[last * S + S - 2]);
  if (!std::isfinite(log_p)) throw NumericError("ctc_loss: alignment probability underflowed");

  Tensor<T> out({}, {-log_p}, dc::detail::wants_grad(tp, {&log_probs}));
  if (out.requires_grad()) {
    tp.record("ctc_loss", [xn = log_probs.node(), cn = out.node(), alpha = std::move(alpha),
                           beta = std::move(beta), labels = std::vector<int>(target.begin(), target.end()),
                           frames, V, S, log_p] {
      if (cn->grad.empty()) return;
      const T g = cn->grad[0];
      auto& gx = xn->grad_buffer();
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t s = 0; s < S; ++s) {
          const T occ = alpha[t * S + s] + beta[t * S + s];
          if (occ == -std::numeric_limits<T>::infinity()) continue;
          const int k = s % 2 == 0 ? vocab::kBlank : labels[s / 2];
          gx[t * V + k] -= g * std::exp(occ - log_p);
        }
    });
  }
  return out;
}

}  // namespace xadapt::backbone
