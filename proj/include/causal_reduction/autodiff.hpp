/*
 * Copyright 2026 The causal-reduce Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "causal_reduction/errors.hpp"
#include "causal_reduction/numeric.hpp"

/// Minimal reverse-mode tape over dense matrices. Columns are batch
/// entries. A tape is single-use and not thread-safe; use one per worker.
namespace causal_reduction::ad {

using Eigen::MatrixXd;

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const MatrixXd& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  struct Node {
    MatrixXd value;
    MatrixXd grad;  // empty until something flows into it
    std::function<void(Tape&)> backward;
    const char* name = "";
    bool needs_grad = false;
  };

  Var constant(MatrixXd value, const char* name = "constant") {
    return push(std::move(value), nullptr, name, {});
  }
  Var parameter(const MatrixXd& value, const char* name = "parameter") {
    Var v = push(value, nullptr, name, {});
    nodes_.back().needs_grad = true;
    return v;
  }

  /// Appends an op node. The backward closure is dropped when no input
  /// depends on a parameter.
  Var push(MatrixXd value, std::function<void(Tape&)> backward, const char* name,
           std::initializer_list<std::size_t> inputs) {
    if (!value.allFinite()) throw NumericalError(std::string("non-finite value produced by ") + name);
    bool needs = false;
    for (std::size_t i : inputs) needs = needs || nodes_[i].needs_grad;
    nodes_.push_back(Node{std::move(value), MatrixXd(), needs ? std::move(backward) : nullptr, name, needs});
    return Var{this, nodes_.size() - 1};
  }

  Var push(MatrixXd value, std::function<void(Tape&)> backward, const char* name,
           const std::vector<std::size_t>& inputs) {
    if (!value.allFinite()) throw NumericalError(std::string("non-finite value produced by ") + name);
    bool needs = false;
    for (std::size_t i : inputs) needs = needs || nodes_[i].needs_grad;
    nodes_.push_back(Node{std::move(value), MatrixXd(), needs ? std::move(backward) : nullptr, name, needs});
    return Var{this, nodes_.size() - 1};
  }

  bool wants(std::size_t id) const { return nodes_[id].needs_grad; }

  const MatrixXd& value(std::size_t id) const { return nodes_[id].value; }
  const MatrixXd& value(Var v) const { return nodes_[v.id].value; }
  bool has_grad(Var v) const { return nodes_[v.id].grad.size() != 0; }

  /// Gradient of the last backward() target with respect to v (zeros if unreached).
  MatrixXd grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.grad.size() ? n.grad : MatrixXd::Zero(n.value.rows(), n.value.cols());
  }

  /// Mutable gradient accumulator for node id, allocated on first use.
  MatrixXd& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = MatrixXd::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  const MatrixXd& upstream(std::size_t id) const { return nodes_[id].grad; }

  void backward(Var target) {
    if (target.tape != this || nodes_[target.id].value.size() != 1)
      throw UsageError("backward() needs a scalar node of this tape");
    grad_ref(target.id).setConstant(1.0);
    for (std::size_t i = target.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0 || !n.backward) continue;
      if (!n.grad.allFinite()) throw NumericalError(std::string("non-finite gradient at ") + n.name);
      n.backward(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

inline const MatrixXd& Var::value() const { return tape->value(id); }

namespace detail {

inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw UsageError("operands live on different tapes");
  return *a.tape;
}

inline void require_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw UsageError(std::string(op) + ": shape mismatch");
}

// Elementwise unary op given value and local derivative as functions of
// the input and output arrays.
template <typename Fwd, typename Deriv>
Var unary(Var a, const char* name, Fwd fwd, Deriv deriv) {
  Tape& t = *a.tape;
  MatrixXd out = fwd(a.value().array()).matrix();
  const std::size_t ia = a.id;
  return t.push(std::move(out),
                [ia, deriv, self = t.size()](Tape& tp) {
                  const auto& x = tp.value(ia).array();
                  const auto& y = tp.value(self).array();
                  tp.grad_ref(ia).array() += tp.upstream(self).array() * deriv(x, y);
                },
                name, {ia});
}

}  // namespace detail

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_shape(a, b, "add");
  const std::size_t ia = a.id, ib = b.id, self = t.size();
  return t.push(a.value() + b.value(),
                [ia, ib, self](Tape& tp) {
                  if (tp.wants(ia)) tp.grad_ref(ia) += tp.upstream(self);
                  if (tp.wants(ib)) tp.grad_ref(ib) += tp.upstream(self);
                },
                "add", {ia, ib});
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_shape(a, b, "sub");
  const std::size_t ia = a.id, ib = b.id, self = t.size();
  return t.push(a.value() - b.value(),
                [ia, ib, self](Tape& tp) {
                  if (tp.wants(ia)) tp.grad_ref(ia) += tp.upstream(self);
                  if (tp.wants(ib)) tp.grad_ref(ib) -= tp.upstream(self);
                },
                "sub", {ia, ib});
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_shape(a, b, "mul");
  const std::size_t ia = a.id, ib = b.id, self = t.size();
  return t.push(a.value().cwiseProduct(b.value()),
                [ia, ib, self](Tape& tp) {
                  if (tp.wants(ia)) tp.grad_ref(ia).array() += tp.upstream(self).array() * tp.value(ib).array();
                  if (tp.wants(ib)) tp.grad_ref(ib).array() += tp.upstream(self).array() * tp.value(ia).array();
                },
                "mul", {ia, ib});
}

inline Var div(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_shape(a, b, "div");
  const std::size_t ia = a.id, ib = b.id, self = t.size();
  return t.push(a.value().cwiseQuotient(b.value()),
                [ia, ib, self](Tape& tp) {
                  const auto& g = tp.upstream(self).array();
                  const auto& bv = tp.value(ib).array();
                  if (tp.wants(ia)) tp.grad_ref(ia).array() += g / bv;
                  if (tp.wants(ib)) tp.grad_ref(ib).array() -= g * tp.value(self).array() / bv;
                },
                "div", {ia, ib});
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  const std::size_t ia = a.id, self = t.size();
  return t.push(a.value() * s, [ia, s, self](Tape& tp) { tp.grad_ref(ia) += s * tp.upstream(self); }, "scale", {ia});
}

inline Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  const std::size_t ia = a.id, self = t.size();
  return t.push((a.value().array() + s).matrix(), [ia, self](Tape& tp) { tp.grad_ref(ia) += tp.upstream(self); },
                "add_scalar", {ia});
}

inline Var exp(Var a) {
  return detail::unary(
      a, "exp", [](const auto& x) { return x.exp(); }, [](const auto&, const auto& y) { return y; });
}

inline Var log(Var a) {
  return detail::unary(
      a, "log", [](const auto& x) { return x.log(); }, [](const auto& x, const auto&) { return x.inverse(); });
}

inline Var square(Var a) {
  return detail::unary(
      a, "square", [](const auto& x) { return x.square(); }, [](const auto& x, const auto&) { return 2.0 * x; });
}

inline Var relu(Var a) {
  return detail::unary(
      a, "relu", [](const auto& x) { return x.max(0.0); },
      [](const auto& x, const auto&) { return (x > 0.0).template cast<double>(); });
}

inline Var logistic(Var a) {
  return detail::unary(
      a, "logistic", [](const auto& x) { return (1.0 + (-x).exp()).inverse(); },
      [](const auto&, const auto& y) { return y * (1.0 - y); });
}

/// log(1 + e^x), evaluated stably.
inline Var softplus(Var a) {
  return detail::unary(
      a, "softplus", [](const auto& x) { return x.max(0.0) + (-x.abs()).exp().log1p(); },
      [](const auto& x, const auto&) { return (1.0 + (-x).exp()).inverse(); });
}

/// Elementwise standard normal log-density.
inline Var normal_log_pdf(Var a) {
  return detail::unary(
      a, "normal_log_pdf", [](const auto& x) { return -0.5 * x.square() - kLogSqrt2Pi; },
      [](const auto& x, const auto&) { return -x; });
}

/// max(a, lo); no gradient flows through clamped entries.
inline Var clamp_min(Var a, double lo) {
  return detail::unary(
      a, "clamp_min", [lo](const auto& x) { return x.max(lo); },
      [lo](const auto& x, const auto&) { return (x > lo).template cast<double>(); });
}

inline Var matmul(Var w, Var x) {
  Tape& t = detail::same_tape(w, x);
  if (w.cols() != x.rows()) throw UsageError("matmul: inner dimension mismatch");
  const std::size_t iw = w.id, ix = x.id, self = t.size();
  return t.push(w.value() * x.value(),
                [iw, ix, self](Tape& tp) {
                  const MatrixXd& g = tp.upstream(self);
                  if (tp.wants(iw)) tp.grad_ref(iw).noalias() += g * tp.value(ix).transpose();
                  if (tp.wants(ix)) tp.grad_ref(ix).noalias() += tp.value(iw).transpose() * g;
                },
                "matmul", {iw, ix});
}

/// W x + b 1^T with b a column vector.
inline Var affine(Var w, Var x, Var b) {
  Tape& t = detail::same_tape(w, x);
  if (w.cols() != x.rows() || b.rows() != w.rows() || b.cols() != 1) throw UsageError("affine: shape mismatch");
  const std::size_t iw = w.id, ix = x.id, ib = b.id, self = t.size();
  MatrixXd out = w.value() * x.value();
  out.colwise() += b.value().col(0);
  return t.push(std::move(out),
                [iw, ix, ib, self](Tape& tp) {
                  const MatrixXd& g = tp.upstream(self);
                  if (tp.wants(iw)) tp.grad_ref(iw).noalias() += g * tp.value(ix).transpose();
                  if (tp.wants(ib)) tp.grad_ref(ib) += g.rowwise().sum();
                  if (tp.wants(ix)) tp.grad_ref(ix).noalias() += tp.value(iw).transpose() * g;
                },
                "affine", {iw, ix, ib});
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  const std::size_t ia = a.id, self = t.size();
  return t.push(MatrixXd::Constant(1, 1, a.value().sum()),
                [ia, self](Tape& tp) { tp.grad_ref(ia).array() += tp.upstream(self)(0, 0); }, "sum", {ia});
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw UsageError("mean of an empty node");
  return scale(sum(a), 1.0 / n);
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_rows: no inputs");
  Tape& t = *parts.front().tape;
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    if (p.tape != &t || p.cols() != cols) throw UsageError("concat_rows: mismatched inputs");
    rows += p.rows();
  }
  MatrixXd out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  std::vector<std::size_t> ids;
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    layout.emplace_back(p.id, r);
    ids.push_back(p.id);
    r += p.rows();
  }
  const std::size_t self = t.size();
  return t.push(std::move(out),
                [layout, self](Tape& tp) {
                  const MatrixXd& g = tp.upstream(self);
                  for (const auto& [id, start] : layout) {
                    if (!tp.wants(id)) continue;
                    MatrixXd& dst = tp.grad_ref(id);
                    dst += g.middleRows(start, dst.rows());
                  }
                },
                "concat_rows", ids);
}

inline Var rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape;
  if (start < 0 || start + count > a.rows()) throw UsageError("rows: out of range");
  const std::size_t ia = a.id, self = t.size();
  return t.push(a.value().middleRows(start, count),
                [ia, start, count, self](Tape& tp) { tp.grad_ref(ia).middleRows(start, count) += tp.upstream(self); },
                "rows", {ia});
}

/// Log-sum-exp over consecutive groups of `group` columns of a 1 x (n*group)
/// row, giving a 1 x n row.
inline Var group_logsumexp(Var a, Eigen::Index group) {
  Tape& t = *a.tape;
  if (a.rows() != 1 || group <= 0 || a.cols() % group != 0) throw UsageError("group_logsumexp: bad shape");
  const Eigen::Index n = a.cols() / group;
  MatrixXd out(1, n);
  const MatrixXd& v = a.value();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto seg = v.row(0).segment(i * group, group).array();
    const double m = seg.maxCoeff();
    out(0, i) = m + std::log((seg - m).exp().sum());
  }
  const std::size_t ia = a.id, self = t.size();
  return t.push(std::move(out),
                [ia, group, n, self](Tape& tp) {
                  const MatrixXd& g = tp.upstream(self);
                  const MatrixXd& v = tp.value(ia);
                  const MatrixXd& o = tp.value(self);
                  MatrixXd& dst = tp.grad_ref(ia);
                  for (Eigen::Index i = 0; i < n; ++i)
                    dst.row(0).segment(i * group, group).array() +=
                        g(0, i) * (v.row(0).segment(i * group, group).array() - o(0, i)).exp();
                },
                "group_logsumexp", {ia});
}

/// Adds a constant row vector of length `group` to each consecutive group of
/// columns (used for quadrature log-weights).
inline Var add_group_constant(Var a, const Eigen::RowVectorXd& offsets) {
  Tape& t = *a.tape;
  const Eigen::Index group = offsets.size();
  if (a.rows() != 1 || group == 0 || a.cols() % group != 0) throw UsageError("add_group_constant: bad shape");
  MatrixXd out = a.value();
  for (Eigen::Index i = 0; i < a.cols() / group; ++i) out.row(0).segment(i * group, group) += offsets;
  const std::size_t ia = a.id, self = t.size();
  return t.push(std::move(out), [ia, self](Tape& tp) { tp.grad_ref(ia) += tp.upstream(self); },
                "add_group_constant", {ia});
}

}  // namespace causal_reduction::ad
