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
#include <limits>
#include <string_view>
#include <vector>

#include "xadapt/diffcalc/tensor.hpp"

namespace xadapt::dc {

/// Define-by-run record of executed operations.
///
/// Every differentiable op appends a backward closure when at least one of
/// its inputs requires a gradient. backward() runs the closures in reverse
/// recording order, which is a reverse topological order of the graph. A
/// tape constructed with recording=false never stores anything and is what
/// inference paths use.
template <std::floating_point T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return entries_.size(); }

  void record(std::string_view op, std::function<void()> backward) {
    entries_.push_back({op, std::move(backward)});
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every leaf that requires a
  /// gradient. Leaf gradients accumulate; callers zero them between steps.
  void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) throw ShapeError("backward", loss.shape(), Shape{});
    if (!loss.requires_grad()) return;
    loss.node()->grad_buffer()[0] += T(1);
    visit_order_.clear();
    for (std::size_t i = entries_.size(); i-- > 0;) {
      visit_order_.push_back(i);
      entries_[i].backward();
    }
  }

  void clear() {
    entries_.clear();
    visit_order_.clear();
  }

  std::string_view op_name(std::size_t i) const { return entries_.at(i).op; }
  const std::vector<std::size_t>& last_visit_order() const { return visit_order_; }

 private:
  struct Entry {
    std::string_view op;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  std::vector<std::size_t> visit_order_;
  bool recording_;
};

namespace detail {

template <class T>
bool wants_grad(const Tape<T>& tp, std::initializer_list<const Tensor<T>*> xs) {
  if (!tp.recording()) return false;
  for (const auto* x : xs)
    if (x->requires_grad()) return true;
  return false;
}

template <class T>
void require_rank2(std::string_view op, const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError(op, "expected a matrix, got " + shape_str(a.shape()));
}

// C[m x n] += A[m x k] * B[k x n]
template <class T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < m; ++i) {
    T* c = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T a = A[i * k + p];
      if (a == T(0)) continue;
      const T* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* a = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* b = B + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p];
      C[i * n + j] += acc;
    }
  }
}

// C[m x n] += A[k x m]^T * B[k x n]
template <class T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* b = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T a = A[p * m + i];
      if (a == T(0)) continue;
      T* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

}  // namespace detail

/// [m x k] * [k x n]
template <class T>
Tensor<T> matmul(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2("matmul", a);
  detail::require_rank2("matmul", b);
  if (a.cols() != b.rows()) throw ShapeError("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> out(m * n, T(0));
  detail::gemm_nn(m, k, n, a.values().data(), b.values().data(), out.data());
  Tensor<T> c({m, n}, std::move(out), detail::wants_grad(tp, {&a, &b}));
  if (c.requires_grad()) {
    tp.record("matmul", [an = a.node(), bn = b.node(), cn = c.node(), m, k, n] {
      if (cn->grad.empty()) return;
      if (an->requires_grad)
        detail::gemm_nt(m, n, k, cn->grad.data(), bn->value.data(), an->grad_buffer().data());
      if (bn->requires_grad)
        detail::gemm_tn(k, m, n, an->value.data(), cn->grad.data(), bn->grad_buffer().data());
    });
  }
  return c;
}

/// [m x k] * [n x k]^T
template <class T>
Tensor<T> matmul_bt(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2("matmul_bt", a);
  detail::require_rank2("matmul_bt", b);
  if (a.cols() != b.cols()) throw ShapeError("matmul_bt", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<T> out(m * n, T(0));
  detail::gemm_nt(m, k, n, a.values().data(), b.values().data(), out.data());
  Tensor<T> c({m, n}, std::move(out), detail::wants_grad(tp, {&a, &b}));
  if (c.requires_grad()) {
    tp.record("matmul_bt", [an = a.node(), bn = b.node(), cn = c.node(), m, k, n] {
      if (cn->grad.empty()) return;
      if (an->requires_grad)
        detail::gemm_nn(m, n, k, cn->grad.data(), bn->value.data(), an->grad_buffer().data());
      if (bn->requires_grad)
        detail::gemm_tn(n, m, k, cn->grad.data(), an->value.data(), bn->grad_buffer().data());
    });
  }
  return c;
}

namespace detail {

template <class T, class Fwd, class Bwd>
Tensor<T> binary_elementwise(Tape<T>& tp, std::string_view op, const Tensor<T>& a,
                             const Tensor<T>& b, Fwd fwd, Bwd bwd) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
  std::vector<T> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  Tensor<T> c(a.shape(), std::move(out), wants_grad(tp, {&a, &b}));
  if (c.requires_grad()) {
    tp.record(op, [an = a.node(), bn = b.node(), cn = c.node(), bwd] {
      if (cn->grad.empty()) return;
      T* ga = an->requires_grad ? an->grad_buffer().data() : nullptr;
      T* gb = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
      for (std::size_t i = 0; i < cn->grad.size(); ++i)
        bwd(cn->grad[i], an->value[i], bn->value[i], ga ? ga + i : nullptr,
            gb ? gb + i : nullptr);
    });
  }
  return c;
}

}  // namespace detail

template <class T>
Tensor<T> add(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      tp, "add", a, b, [](T x, T y) { return x + y; },
      [](T g, T, T, T* ga, T* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

template <class T>
Tensor<T> sub(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      tp, "sub", a, b, [](T x, T y) { return x - y; },
      [](T g, T, T, T* ga, T* gb) {
        if (ga) *ga += g;
        if (gb) *gb -= g;
      });
}

template <class T>
Tensor<T> mul(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      tp, "mul", a, b, [](T x, T y) { return x * y; },
      [](T g, T x, T y, T* ga, T* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

template <class T>
Tensor<T> scale(Tape<T>& tp, const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  Tensor<T> c(a.shape(), std::move(out), detail::wants_grad(tp, {&a}));
  if (c.requires_grad()) {
    tp.record("scale", [an = a.node(), cn = c.node(), factor] {
      if (cn->grad.empty()) return;
      auto& ga = an->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * cn->grad[i];
    });
  }
  return c;
}

/// Adds a length-n vector to every row of an [m x n] matrix.
template <class T>
Tensor<T> add_bias(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& bias) {
  detail::require_rank2("add_bias", a);
  if (bias.rank() != 1 || bias.size() != a.cols())
    throw ShapeError("add_bias", a.shape(), bias.shape());
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  Tensor<T> c(a.shape(), std::move(out), detail::wants_grad(tp, {&a, &bias}));
  if (c.requires_grad()) {
    tp.record("add_bias", [an = a.node(), bn = bias.node(), cn = c.node(), m, n] {
      if (cn->grad.empty()) return;
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += cn->grad[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += cn->grad[i * n + j];
      }
    });
  }
  return c;
}

template <class T>
Tensor<T> relu(Tape<T>& tp, const Tensor<T>& a) {
  std::vector<T> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  Tensor<T> c(a.shape(), std::move(out), detail::wants_grad(tp, {&a}));
  if (c.requires_grad()) {
    tp.record("relu", [an = a.node(), cn = c.node()] {
      if (cn->grad.empty()) return;
      auto& ga = an->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (an->value[i] > T(0)) ga[i] += cn->grad[i];
    });
  }
  return c;
}

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer normalisation with affine gain and bias (both length n).
template <class T>
Tensor<T> layer_norm(Tape<T>& tp, const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps = T(kLayerNormEps)) {
  detail::require_rank2("layer_norm", x);
  if (gain.size() != x.cols() || gain.rank() != 1)
    throw ShapeError("layer_norm", x.shape(), gain.shape());
  if (bias.size() != x.cols() || bias.rank() != 1)
    throw ShapeError("layer_norm", x.shape(), bias.shape());
  if (!(eps > T(0))) throw ShapeError("layer_norm", "epsilon must be positive");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> xhat(m * n), inv_std(m), out(m * n);
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i) {
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += xv[i * n + j];
    mean /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const T d = xv[i * n + j] - mean;
      var += d * d;
    }
    var /= T(n);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mean) * inv_std[i];
      out[i * n + j] = gv[j] * xhat[i * n + j] + bv[j];
    }
  }
  Tensor<T> c(x.shape(), std::move(out), detail::wants_grad(tp, {&x, &gain, &bias}));
  if (c.requires_grad()) {
    tp.record("layer_norm", [xn = x.node(), gn = gain.node(), bn = bias.node(),
                             cn = c.node(), xhat = std::move(xhat),
                             inv_std = std::move(inv_std), m, n] {
      if (cn->grad.empty()) return;
      const auto& dy = cn->grad;
      if (gn->requires_grad) {
        auto& gg = gn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gg[j] += dy[i * n + j] * xhat[i * n + j];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += dy[i * n + j];
      }
      if (xn->requires_grad) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          T mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const T d = dy[i * n + j] * gn->value[j];
            mean_d += d;
            mean_dx += d * xhat[i * n + j];
          }
          mean_d /= T(n);
          mean_dx /= T(n);
          for (std::size_t j = 0; j < n; ++j) {
            const T d = dy[i * n + j] * gn->value[j];
            gx[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
          }
        }
      }
    });
  }
  return c;
}

namespace detail {

// Row-wise softmax where row i only covers columns [0, limit(i)).
template <class T, class Limit>
Tensor<T> softmax_rows(Tape<T>& tp, std::string_view op, const Tensor<T>& x, Limit limit) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(m * n, T(0));
  const auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t lim = limit(i);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < lim; ++j) mx = std::max(mx, xv[i * n + j]);
    T total = 0;
    for (std::size_t j = 0; j < lim; ++j) {
      out[i * n + j] = std::exp(xv[i * n + j] - mx);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < lim; ++j) out[i * n + j] /= total;
  }
  Tensor<T> c(x.shape(), std::move(out), wants_grad(tp, {&x}));
  if (c.requires_grad()) {
    tp.record(op, [xn = x.node(), cn = c.node(), m, n] {
      if (cn->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      const auto& y = cn->value;
      const auto& dy = cn->grad;
      for (std::size_t i = 0; i < m; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (dy[i * n + j] - dot);
      }
    });
  }
  return c;
}

}  // namespace detail

/// Softmax along the last axis (each row of a matrix, or a whole vector).
template <class T>
Tensor<T> softmax(Tape<T>& tp, const Tensor<T>& x) {
  const std::size_t n = x.cols();
  return detail::softmax_rows(tp, "softmax", x, [n](std::size_t) { return n; });
}

/// Row i attends to columns 0..i only; masked entries come out as exact zeros.
template <class T>
Tensor<T> causal_softmax(Tape<T>& tp, const Tensor<T>& x) {
  detail::require_rank2("causal_softmax", x);
  const std::size_t n = x.cols();
  return detail::softmax_rows(tp, "causal_softmax", x,
                              [n](std::size_t i) { return std::min(i + 1, n); });
}

template <class T>
Tensor<T> log_softmax(Tape<T>& tp, const Tensor<T>& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(m * n);
  const auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[i * n + j]);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(xv[i * n + j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] - lse;
  }
  Tensor<T> c(x.shape(), std::move(out), detail::wants_grad(tp, {&x}));
  if (c.requires_grad()) {
    tp.record("log_softmax", [xn = x.node(), cn = c.node(), m, n] {
      if (cn->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      const auto& y = cn->value;
      const auto& dy = cn->grad;
      for (std::size_t i = 0; i < m; ++i) {
        T total = 0;
        for (std::size_t j = 0; j < n; ++j) total += dy[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          gx[i * n + j] += dy[i * n + j] - std::exp(y[i * n + j]) * total;
      }
    });
  }
  return c;
}

template <class T>
Tensor<T> sum(Tape<T>& tp, const Tensor<T>& x) {
  T total = 0;
  for (T v : x.values()) total += v;
  Tensor<T> c({}, {total}, detail::wants_grad(tp, {&x}));
  if (c.requires_grad()) {
    tp.record("sum", [xn = x.node(), cn = c.node()] {
      if (cn->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      for (auto& g : gx) g += cn->grad[0];
    });
  }
  return c;
}

template <class T>
Tensor<T> mean(Tape<T>& tp, const Tensor<T>& x) {
  return scale(tp, sum(tp, x), T(1) / T(x.size()));
}

/// Gathers rows of an embedding table [V x d] for the given ids.
template <class T>
Tensor<T> embedding_lookup(Tape<T>& tp, const Tensor<T>& table, std::span<const int> ids) {
  detail::require_rank2("embedding_lookup", table);
  const std::size_t V = table.rows(), d = table.cols();
  std::vector<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V)
      throw ShapeError("embedding_lookup",
                       "id " + std::to_string(ids[i]) + " outside table " + shape_str(table.shape()));
    std::copy_n(table.values().begin() + ids[i] * d, d, out.begin() + i * d);
  }
  Tensor<T> c({ids.size(), d}, std::move(out), detail::wants_grad(tp, {&table}));
  if (c.requires_grad()) {
    tp.record("embedding_lookup",
              [tn = table.node(), cn = c.node(), ids = std::vector<int>(ids.begin(), ids.end()), d] {
                if (cn->grad.empty()) return;
                auto& gt = tn->grad_buffer();
                for (std::size_t i = 0; i < ids.size(); ++i)
                  for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += cn->grad[i * d + j];
              });
  }
  return c;
}

/// out[i] = x(i, index[i]); returns a length-m vector.
template <class T>
Tensor<T> pick(Tape<T>& tp, const Tensor<T>& x, std::span<const int> index) {
  detail::require_rank2("pick", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (index.size() != m)
    throw ShapeError("pick", x.shape(), Shape{index.size()});
  std::vector<T> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= n)
      throw ShapeError("pick", "column " + std::to_string(index[i]) + " outside " +
                                   shape_str(x.shape()));
    out[i] = x.at(i, index[i]);
  }
  Tensor<T> c({m}, std::move(out), detail::wants_grad(tp, {&x}));
  if (c.requires_grad()) {
    tp.record("pick", [xn = x.node(), cn = c.node(),
                       idx = std::vector<int>(index.begin(), index.end()), n] {
      if (cn->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) gx[i * n + idx[i]] += cn->grad[i];
    });
  }
  return c;
}

/// Columns [begin, end) of a matrix.
template <class T>
Tensor<T> slice_cols(Tape<T>& tp, const Tensor<T>& x, std::size_t begin, std::size_t end) {
  detail::require_rank2("slice_cols", x);
  if (begin >= end || end > x.cols())
    throw ShapeError("slice_cols", "range [" + std::to_string(begin) + ", " +
                                       std::to_string(end) + ") outside " + shape_str(x.shape()));
  const std::size_t m = x.rows(), n = x.cols(), w = end - begin;
  std::vector<T> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.at(i, begin + j);
  Tensor<T> c({m, w}, std::move(out), detail::wants_grad(tp, {&x}));
  if (c.requires_grad()) {
    tp.record("slice_cols", [xn = x.node(), cn = c.node(), m, n, w, begin] {
      if (cn->grad.empty()) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += cn->grad[i * w + j];
    });
  }
  return c;
}

/// Concatenates matrices with equal row counts along the column axis.
template <class T>
Tensor<T> concat_cols(Tape<T>& tp, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols", "no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  bool grad = false;
  for (const auto& p : parts) {
    detail::require_rank2("concat_cols", p);
    if (p.rows() != m) throw ShapeError("concat_cols", parts[0].shape(), p.shape());
    n += p.cols();
    grad = grad || detail::wants_grad(tp, {&p});
  }
  std::vector<T> out(m * n);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out[i * n + off + j] = p.at(i, j);
    off += p.cols();
  }
  Tensor<T> c({m, n}, std::move(out), grad);
  if (c.requires_grad()) {
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tp.record("concat_cols", [nodes = std::move(nodes), cn = c.node(), m, n] {
      if (cn->grad.empty()) return;
      std::size_t off = 0;
      for (const auto& pn : nodes) {
        const std::size_t w = pn->shape[1];
        if (pn->requires_grad) {
          auto& g = pn->grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * w + j] += cn->grad[i * n + off + j];
        }
        off += w;
      }
    });
  }
  return c;
}

/// Row-wise dot product of two [m x n] matrices; returns [m x 1].
template <class T>
Tensor<T> rowdot(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2("rowdot", a);
  if (a.shape() != b.shape()) throw ShapeError("rowdot", a.shape(), b.shape());
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.at(i, j) * b.at(i, j);
  Tensor<T> c({m, 1}, std::move(out), detail::wants_grad(tp, {&a, &b}));
  if (c.requires_grad()) {
    tp.record("rowdot", [an = a.node(), bn = b.node(), cn = c.node(), m, n] {
      if (cn->grad.empty()) return;
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += cn->grad[i] * bn->value[i * n + j];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[i * n + j] += cn->grad[i] * an->value[i * n + j];
      }
    });
  }
  return c;
}

/// Scales row i of x [m x n] by w(i, 0) for a weight column w [m x 1].
template <class T>
Tensor<T> mul_rows(Tape<T>& tp, const Tensor<T>& x, const Tensor<T>& w) {
  detail::require_rank2("mul_rows", x);
  if (w.rank() != 2 || w.rows() != x.rows() || w.cols() != 1)
    throw ShapeError("mul_rows", x.shape(), w.shape());
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i, j) * w[i];
  Tensor<T> c(x.shape(), std::move(out), detail::wants_grad(tp, {&x, &w}));
  if (c.requires_grad()) {
    tp.record("mul_rows", [xn = x.node(), wn = w.node(), cn = c.node(), m, n] {
      if (cn->grad.empty()) return;
      if (xn->requires_grad) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += cn->grad[i * n + j] * wn->value[i];
      }
      if (wn->requires_grad) {
        auto& gw = wn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gw[i] += cn->grad[i * n + j] * xn->value[i * n + j];
      }
    });
  }
  return c;
}

/// Weighted sum of scalars: sum_i coeff[i] * terms[i].
template <class T>
Tensor<T> combine(Tape<T>& tp, std::initializer_list<std::pair<T, Tensor<T>>> terms) {
  Tensor<T> acc;
  for (const auto& [coeff, term] : terms) {
    if (term.size() != 1) throw ShapeError("combine", term.shape(), Shape{});
    Tensor<T> scaled = coeff == T(1) ? term : scale(tp, term, coeff);
    acc = acc.defined() ? add(tp, acc, scaled) : scaled;
  }
  return acc;
}

template <class T>
bool all_finite(const Tensor<T>& x) {
  for (T v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace xadapt::dc
