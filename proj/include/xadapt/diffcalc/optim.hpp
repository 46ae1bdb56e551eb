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
#include <unordered_map>
#include <vector>

#include "xadapt/diffcalc/params.hpp"

namespace xadapt::dc {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 0.0;  // adds l2 * theta to the gradient
};

/// Adam over the unfrozen partitions of a ParamSet. Parameters in frozen
/// partitions are never written.
class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

  void set_lr(double lr) { opt_.lr = lr; }
  const AdamOptions& options() const { return opt_; }

  void step(ParamSet<double>& ps) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, double(t_));
    for (auto& e : ps.entries()) {
      if (ps.frozen(e.partition)) continue;
      auto& st = state_[e.name];
      auto w = e.tensor.mutable_values();
      if (st.m.empty()) {
        st.m.assign(w.size(), 0.0);
        st.v.assign(w.size(), 0.0);
      }
      const bool has = e.tensor.has_grad();
      const auto g = e.tensor.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = (has ? g[i] : 0.0) + opt_.l2 * w[i];
        st.m[i] = opt_.beta1 * st.m[i] + (1.0 - opt_.beta1) * gi;
        st.v[i] = opt_.beta2 * st.v[i] + (1.0 - opt_.beta2) * gi * gi;
        w[i] -= opt_.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + opt_.eps);
      }
    }
  }

 private:
  struct State {
    std::vector<double> m, v;
  };
  AdamOptions opt_;
  std::unordered_map<std::string, State> state_;
  long t_ = 0;
};

/// Plain gradient descent over the unfrozen partitions.
inline void sgd_step(ParamSet<double>& ps, double lr) {
  for (auto& e : ps.entries()) {
    if (ps.frozen(e.partition) || !e.tensor.has_grad()) continue;
    auto w = e.tensor.mutable_values();
    const auto g = e.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
  }
}

}  // namespace xadapt::dc
