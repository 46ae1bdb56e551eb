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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xadapt/diffcalc/tensor.hpp"

namespace xadapt::metalearn {

using Vec = std::vector<double>;

/// Loss at theta; writes the gradient when `grad` is non-null.
using LossGrad = std::function<double(std::span<const double> theta, Vec* grad)>;
/// Hessian of the inner loss at theta applied to v.
using Hvp = std::function<Vec(std::span<const double> theta, std::span<const double> v)>;

/// One episode as seen by the meta-learner: a meta-train loss driving the
/// inner update and a meta-validation loss scoring the adapted parameters.
struct MetaTask {
  std::string id;
  LossGrad train;
  LossGrad val;
  Hvp train_hvp;  // needed for second-order meta steps only
};

enum class InnerOptimizer { kSgd, kAdamNoMomentum };
enum class Order { kFirst, kSecond };

struct InnerOptions {
  double lr = 0.028;
  std::size_t steps = 1;
  InnerOptimizer optimizer = InnerOptimizer::kSgd;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

class MetaError : public Error {
 public:
  using Error::Error;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Adapted parameters after `steps` inner updates; `trajectory`, when
/// given, receives the parameters before each step.
inline Vec inner_update(std::span<const double> theta, const MetaTask& task, const InnerOptions& opt,
                        std::vector<Vec>* trajectory = nullptr) {
  if (!(opt.lr >= 0.0)) throw MetaError("inner_update: learning rate must be non-negative");
  if (opt.steps == 0) throw MetaError("inner_update: need at least one step");
  Vec w(theta.begin(), theta.end()), g, v;
  if (opt.optimizer == InnerOptimizer::kAdamNoMomentum) v.assign(w.size(), 0.0);
  for (std::size_t k = 0; k < opt.steps; ++k) {
    if (trajectory) trajectory->push_back(w);
    g.assign(w.size(), 0.0);
    const double loss = task.train(w, &g);
    if (!std::isfinite(loss) || !all_finite(g))
      throw MetaError("inner_update: non-finite loss or gradient in episode '" + task.id + "'");
    if (opt.optimizer == InnerOptimizer::kSgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= opt.lr * g[i];
    } else {
      const double c2 = 1.0 - std::pow(opt.adam_beta2, double(k + 1));
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = opt.adam_beta2 * v[i] + (1.0 - opt.adam_beta2) * g[i] * g[i];
        w[i] -= opt.lr * g[i] / (std::sqrt(v[i] / c2) + opt.adam_eps);
      }
    }
  }
  return w;
}

struct MetaStepResult {
  Vec meta_gradient;                // sum over episodes
  std::vector<double> val_losses;   // per episode, at the adapted parameters
};

/// theta <- theta - mu * sum_i grad_theta L_val_i(theta'_i).
inline MetaStepResult meta_step(Vec& theta, const std::vector<MetaTask>& tasks, double mu, Order order,
                                const InnerOptions& inner) {
  if (tasks.empty()) throw MetaError("meta_step: no episodes");
  if (!(mu >= 0.0)) throw MetaError("meta_step: meta step size must be non-negative");
  if (order == Order::kSecond && inner.optimizer != InnerOptimizer::kSgd)
    throw MetaError("meta_step: second order is implemented for SGD inner updates only");
  MetaStepResult r;
  r.meta_gradient.assign(theta.size(), 0.0);
  std::string bad;
  for (const auto& task : tasks) {
    std::vector<Vec> path;
    const Vec adapted = inner_update(theta, task, inner, order == Order::kSecond ? &path : nullptr);
    Vec g(theta.size(), 0.0);
    const double loss = task.val(adapted, &g);
    if (order == Order::kSecond) {
      if (!task.train_hvp) throw MetaError("meta_step: episode '" + task.id + "' has no Hessian product");
      // Back through each SGD step: d theta_{k+1} / d theta_k = I - lr * H(theta_k).
      for (std::size_t k = path.size(); k-- > 0;) {
        const Vec hv = task.train_hvp(path[k], g);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= inner.lr * hv[i];
      }
    }
    if (!std::isfinite(loss) || !all_finite(g)) bad += (bad.empty() ? "" : ", ") + task.id;
    r.val_losses.push_back(loss);
    for (std::size_t i = 0; i < g.size(); ++i) r.meta_gradient[i] += g[i];
  }
  if (!bad.empty()) throw MetaError("meta_step: non-finite meta-gradient in episodes: " + bad);
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= mu * r.meta_gradient[i];
  return r;
}

/// Central-difference Hessian-vector product from a gradient oracle.
inline Hvp finite_difference_hvp(LossGrad f, double radius = 1e-4) {
  return [f = std::move(f), radius](std::span<const double> theta, std::span<const double> v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    Vec out(theta.size(), 0.0);
    if (norm == 0.0) return out;
    const double r = radius / norm;
    Vec up(theta.begin(), theta.end()), down(theta.begin(), theta.end());
    for (std::size_t i = 0; i < up.size(); ++i) {
      up[i] += r * v[i];
      down[i] -= r * v[i];
    }
    Vec gu(theta.size(), 0.0), gd(theta.size(), 0.0);
    f(up, &gu);
    f(down, &gd);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (gu[i] - gd[i]) / (2.0 * r);
    return out;
  };
}

/// mu at `epoch` of `epochs`, decreasing linearly from mu0 towards 0.
inline double annealed_mu(double mu0, std::size_t epoch, std::size_t epochs) {
  if (epochs == 0) return mu0;
  return mu0 * (1.0 - double(epoch) / double(epochs));
}

}  // namespace xadapt::metalearn
