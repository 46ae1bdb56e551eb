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

#include "xadapt/diffcalc/params.hpp"
#include "xadapt/diffcalc/tape.hpp"

namespace xadapt::dc {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares tape gradients of a scalar computation against central
/// differences, over every element of every unfrozen parameter.
///
/// `f` is called as f(Tape<U>&, ParamSet<U>&) and must return a scalar; it is
/// instantiated for double (the analytic path) and for `Oracle` (the
/// finite-difference path). Evaluating the differences in extended precision
/// keeps their rounding noise far below the 1e-8 floor of the relative error
/// |analytic - numeric| / (|numeric| + 1e-8).
template <std::floating_point Oracle = long double, class F>
GradCheckResult grad_check(F&& f, const ParamSet<double>& params, double step) {
  if (!(step > 0.0 && step <= 1e-2)) throw Error("grad_check: step must lie in (0, 1e-2]");

  ParamSet<double> analytic_params = params.clone();
  analytic_params.zero_grad();
  {
    Tape<double> tape;
    Tensor<double> loss = f(tape, analytic_params);
    if (loss.size() != 1) throw ShapeError("grad_check", loss.shape(), Shape{});
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
    tape.backward(loss);
  }

  ParamSet<Oracle> probe = params.template cast<Oracle>();
  auto eval = [&] {
    Tape<Oracle> tape(false);
    Tensor<Oracle> loss = f(tape, probe);
    const Oracle v = loss.item();
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError("grad_check: non-finite loss under perturbation");
    return v;
  };

  GradCheckResult result;
  const Oracle h = static_cast<Oracle>(step);
  for (std::size_t e = 0; e < probe.entries().size(); ++e) {
    auto& entry = probe.entries()[e];
    if (probe.frozen(entry.partition)) continue;
    const auto& ref = analytic_params.entries()[e].tensor;
    auto values = entry.tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Oracle saved = values[i];
      values[i] = saved + h;
      const Oracle up = eval();
      values[i] = saved - h;
      const Oracle down = eval();
      values[i] = saved;
      const double numeric = static_cast<double>((up - down) / (Oracle(2) * h));
      const double analytic = ref.has_grad() ? ref.grad()[i] : 0.0;
      const double rel = std::abs(analytic - numeric) / (std::abs(numeric) + 1e-8);
      ++result.checked;
      if (rel > result.max_rel_error || result.checked == 1) {
        result.max_rel_error = rel;
        result.worst_param = entry.name;
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace xadapt::dc
