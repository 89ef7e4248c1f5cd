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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include "causal_reduction/autodiff.hpp"
#include "causal_reduction/errors.hpp"

/// Monotone linear rational splines on [-B, B] with identity tails.
namespace causal_reduction::flow {

inline constexpr double kMinDerivative = 1e-3;
inline constexpr double kLambdaMin = 0.025;
inline constexpr double kLambdaSpan = 0.95;
// Every bin keeps at least this fraction of [-B, B] in each coordinate.
inline constexpr double kMinBinFraction = 1e-3;

namespace detail {

inline double bin_fraction_scale(Eigen::Index bins) {
  const double s = 1.0 - kMinBinFraction * static_cast<double>(bins);
  if (!(s > 0.0)) throw UsageError("too many spline bins for the minimum bin fraction");
  return s;
}

}  // namespace detail

/// Number of raw parameters for K bins: K width logits, K height logits,
/// K-1 interior derivative pre-activations, K lambda pre-activations.
constexpr Eigen::Index raw_size(Eigen::Index bins) { return 4 * bins - 1; }

namespace detail {

// Shift so that a raw value of 0 maps to derivative 1.
inline double derivative_shift() {
  static const double shift = std::log(std::expm1(1.0 - kMinDerivative));
  return shift;
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One bin of the spline in original coordinates. Left weight is 1, right
// weight sqrt(d0/d1), which makes the slopes at the knots equal d0 and d1.
template <typename T>
void rational_bin(const T& x, const T& x0, const T& dx, const T& y0, const T& dy, const T& d0, const T& d1,
                  const T& lambda, T& y, T& log_deriv) {
  using std::log;
  using std::sqrt;
  const T w1 = sqrt(d0 / d1);
  const T y1 = y0 + dy;
  const T phi = (x - x0) / dx;
  const T ym = ((1.0 - lambda) * y0 + w1 * lambda * y1) / ((1.0 - lambda) + w1 * lambda);
  const T wm = (lambda * d0 + (1.0 - lambda) * w1 * d1) * dx / dy;
  if (phi <= lambda) {
    const T den = (lambda - phi) + wm * phi;
    y = (y0 * (lambda - phi) + wm * ym * phi) / den;
    log_deriv = log(wm * lambda * (ym - y0)) - 2.0 * log(den) - log(dx);
  } else {
    const T den = wm * (1.0 - phi) + w1 * (phi - lambda);
    y = (wm * ym * (1.0 - phi) + w1 * y1 * (phi - lambda)) / den;
    log_deriv = log(wm * w1 * (1.0 - lambda) * (y1 - ym)) - 2.0 * log(den) - log(dx);
  }
}

inline double rational_bin_inverse(double y, double x0, double dx, double y0, double dy, double d0, double d1,
                                   double lambda) {
  const double w1 = std::sqrt(d0 / d1);
  const double y1 = y0 + dy;
  const double ym = ((1.0 - lambda) * y0 + w1 * lambda * y1) / ((1.0 - lambda) + w1 * lambda);
  const double wm = (lambda * d0 + (1.0 - lambda) * w1 * d1) * dx / dy;
  double phi;
  if (y <= ym) {
    phi = lambda * (y - y0) / ((y - y0) + wm * (ym - y));
  } else {
    phi = (wm * (y - ym) + lambda * w1 * (y1 - y)) / (wm * (y - ym) + w1 * (y1 - y));
  }
  return x0 + std::clamp(phi, 0.0, 1.0) * dx;
}

}  // namespace detail

/// Explicit spline: K+1 knots in each coordinate spanning [-B, B], K+1
/// positive knot derivatives and K in-bin split points lambda.
struct SplineTransform {
  double bound = 6.0;
  std::vector<double> knots_x, knots_y, derivs, lambdas;

  std::size_t bins() const { return lambdas.size(); }

  /// Maps raw parameters (length raw_size(K)) to a valid transform.
  static SplineTransform from_raw(const double* raw, Eigen::Index bins, double bound) {
    if (bins < 1) throw UsageError("spline needs at least one bin");
    if (!(bound > 0.0)) throw UsageError("spline bound must be positive");
    SplineTransform t;
    t.bound = bound;
    const auto k = static_cast<std::size_t>(bins);
    const double frac_scale = detail::bin_fraction_scale(bins);
    auto knots = [&](const double* logits, std::vector<double>& out) {
      const double m = *std::max_element(logits, logits + k);
      std::vector<double> e(k);
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += e[i] = std::exp(logits[i] - m);
      out.assign(k + 1, -bound);
      double acc = 0.0;
      for (std::size_t i = 0; i + 1 < k; ++i) {
        acc += kMinBinFraction + frac_scale * e[i] / s;
        out[i + 1] = -bound + 2.0 * bound * acc;
      }
      out[k] = bound;
    };
    knots(raw, t.knots_x);
    knots(raw + k, t.knots_y);
    t.derivs.assign(k + 1, 1.0);
    for (std::size_t i = 1; i < k; ++i)
      t.derivs[i] = kMinDerivative + detail::softplus(raw[2 * k + i - 1] + detail::derivative_shift());
    t.lambdas.resize(k);
    for (std::size_t i = 0; i < k; ++i) t.lambdas[i] = kLambdaMin + kLambdaSpan * detail::logistic(raw[3 * k - 1 + i]);
    return t;
  }

  static SplineTransform from_raw(const Eigen::VectorXd& raw, Eigen::Index bins, double bound) {
    if (raw.size() != raw_size(bins)) throw UsageError("raw spline parameter vector has the wrong length");
    return from_raw(raw.data(), bins, bound);
  }

  void validate() const {
    const std::size_t k = bins();
    if (k == 0 || knots_x.size() != k + 1 || knots_y.size() != k + 1 || derivs.size() != k + 1)
      throw DataError("SplineTransform: inconsistent sizes");
    if (knots_x.front() != -bound || knots_x.back() != bound || knots_y.front() != -bound || knots_y.back() != bound)
      throw DataError("SplineTransform: knots must span [-B, B]");
    for (std::size_t i = 0; i < k; ++i) {
      if (!(knots_x[i + 1] > knots_x[i]) || !(knots_y[i + 1] > knots_y[i]))
        throw DataError("SplineTransform: knots must be strictly increasing");
      if (!(lambdas[i] > 0.0 && lambdas[i] < 1.0)) throw DataError("SplineTransform: lambda outside (0, 1)");
    }
    for (double d : derivs)
      if (!(d > 0.0)) throw DataError("SplineTransform: derivatives must be positive");
  }

  /// (y, log dy/dx).
  std::pair<double, double> forward(double x) const {
    if (!std::isfinite(x)) throw DataError("spline forward: non-finite input");
    if (x < -bound || x > bound) return {x, 0.0};
    const std::size_t k = bin_of(knots_x, x);
    double y, ld;
    detail::rational_bin(x, knots_x[k], knots_x[k + 1] - knots_x[k], knots_y[k], knots_y[k + 1] - knots_y[k],
                         derivs[k], derivs[k + 1], lambdas[k], y, ld);
    return {y, ld};
  }

  double inverse(double y) const {
    if (!std::isfinite(y)) throw DataError("spline inverse: non-finite input");
    if (y < -bound || y > bound) return y;
    const std::size_t k = bin_of(knots_y, y);
    return detail::rational_bin_inverse(y, knots_x[k], knots_x[k + 1] - knots_x[k], knots_y[k],
                                        knots_y[k + 1] - knots_y[k], derivs[k], derivs[k + 1], lambdas[k]);
  }

 private:
  static std::size_t bin_of(const std::vector<double>& knots, double v) {
    const auto it = std::upper_bound(knots.begin() + 1, knots.end() - 1, v);
    return static_cast<std::size_t>(it - knots.begin()) - 1;
  }
};

/// Tape node applying splines column-wise. raw is raw_size(K) x n, or
/// raw_size(K) x 1 to share one transform across all columns; data is 1 x n.
/// Returns a 2 x n node: row 0 the transformed values, row 1 log dy/dx.
inline ad::Var spline_forward(ad::Var raw, ad::Var data, Eigen::Index bins, double bound) {
  using Eigen::MatrixXd;
  ad::Tape& tape = *raw.tape;
  if (data.tape != &tape) throw UsageError("spline_forward: operands on different tapes");
  const Eigen::Index p = raw_size(bins), n = data.cols(), m = raw.cols();
  if (raw.rows() != p || data.rows() != 1 || (m != 1 && m != n)) throw UsageError("spline_forward: bad shapes");
  const std::size_t k = static_cast<std::size_t>(bins);
  const bool want = tape.wants(raw.id) || tape.wants(data.id);

  // Softmax of width and height logits for every raw column (vectorized).
  const MatrixXd& r = raw.value();
  auto softmax_block = [&](Eigen::Index start) {
    MatrixXd s = r.middleRows(start, bins);
    const Eigen::RowVectorXd mx = s.colwise().maxCoeff();
    s = (s.rowwise() - mx).array().exp().matrix();
    const Eigen::RowVectorXd tot = s.colwise().sum();
    for (Eigen::Index c = 0; c < s.cols(); ++c) s.col(c) /= tot[c];
    return s;
  };
  MatrixXd sw = softmax_block(0), sh = softmax_block(bins);
  const double frac_scale = detail::bin_fraction_scale(bins);
  const MatrixXd ew = (frac_scale * sw).array() + kMinBinFraction;
  const MatrixXd eh = (frac_scale * sh).array() + kMinBinFraction;

  using Deriv = Eigen::Matrix<double, 8, 1>;
  using AD = Eigen::AutoDiffScalar<Deriv>;
  MatrixXd out(2, n);
  // Per column: bin index, local partials of (y, log-deriv) with respect to
  // (x0, dx, y0, dy, d0, d1, lambda, x).
  std::vector<int> bin(static_cast<std::size_t>(n), -1);
  Eigen::Matrix<double, 16, Eigen::Dynamic> partial;
  if (want) partial.resize(16, n);

  const double* x = data.value().data();
  const double shift = detail::derivative_shift();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = x[i];
    if (xi < -bound || xi > bound) {
      out(0, i) = xi;
      out(1, i) = 0.0;
      continue;
    }
    const Eigen::Index c = m == 1 ? 0 : i;
    const double* swc = ew.col(c).data();
    const double* shc = eh.col(c).data();
    std::size_t b = 0;
    double x0 = -bound, acc = 0.0, yacc = 0.0;
    for (; b + 1 < k; ++b) {
      const double next = -bound + 2.0 * bound * (acc + swc[b]);
      if (xi < next) break;
      acc += swc[b];
      yacc += shc[b];
      x0 = next;
    }
    const double x1 = b + 1 < k ? -bound + 2.0 * bound * (acc + swc[b]) : bound;
    const double y0 = -bound + 2.0 * bound * yacc;
    const double y1 = b + 1 < k ? -bound + 2.0 * bound * (yacc + shc[b]) : bound;
    const double* rc = r.col(c).data();
    const double d0 = b == 0 ? 1.0 : kMinDerivative + detail::softplus(rc[2 * k + b - 1] + shift);
    const double d1 = b + 1 == k ? 1.0 : kMinDerivative + detail::softplus(rc[2 * k + b] + shift);
    const double lam = kLambdaMin + kLambdaSpan * detail::logistic(rc[3 * k - 1 + b]);
    bin[static_cast<std::size_t>(i)] = static_cast<int>(b);
    if (want) {
      const std::array<double, 8> args{x0, x1 - x0, y0, y1 - y0, d0, d1, lam, xi};
      std::array<AD, 8> v;
      for (int j = 0; j < 8; ++j) v[j] = AD(args[j], 8, j);
      AD y, ld;
      detail::rational_bin(v[7], v[0], v[1], v[2], v[3], v[4], v[5], v[6], y, ld);
      out(0, i) = y.value();
      out(1, i) = ld.value();
      partial.col(i).head<8>() = y.derivatives();
      partial.col(i).tail<8>() = ld.derivatives();
    } else {
      double y, ld;
      detail::rational_bin(xi, x0, x1 - x0, y0, y1 - y0, d0, d1, lam, y, ld);
      out(0, i) = y;
      out(1, i) = ld;
    }
  }

  const std::size_t ir = raw.id, ix = data.id, self = tape.size();
  return tape.push(
      std::move(out),
      [=, sw = std::move(sw), sh = std::move(sh), bin = std::move(bin), partial = std::move(partial)](ad::Tape& tp) {
        const MatrixXd& g = tp.upstream(self);
        const bool want_raw = tp.wants(ir), want_x = tp.wants(ix);
        // Gradients with respect to the activated quantities, per raw column:
        // rows [0, K) width fractions, [K, 2K) height fractions,
        // [2K, 3K+1) knot derivatives, [3K+1, 4K+1) lambdas.
        MatrixXd pre;
        if (want_raw) pre = MatrixXd::Zero(4 * bins + 1, m);
        MatrixXd* gx = want_x ? &tp.grad_ref(ix) : nullptr;
        for (Eigen::Index i = 0; i < n; ++i) {
          const int b = bin[static_cast<std::size_t>(i)];
          if (b < 0) {
            if (gx) (*gx)(0, i) += g(0, i);
            continue;
          }
          Deriv d = g(0, i) * partial.col(i).head<8>() + g(1, i) * partial.col(i).tail<8>();
          if (gx) (*gx)(0, i) += d[7];
          if (!want_raw) continue;
          const Eigen::Index c = m == 1 ? 0 : i;
          const auto bb = static_cast<Eigen::Index>(b);
          // x0 = -B + 2B sum_{j<b} e_j, dx = 2B e_b with e = m + a s (the
          // same for heights).
          const double gs_x0 = 2.0 * bound * frac_scale * d[0], gs_y0 = 2.0 * bound * frac_scale * d[2];
          for (Eigen::Index j = 0; j < bb; ++j) {
            pre(j, c) += gs_x0;
            pre(bins + j, c) += gs_y0;
          }
          pre(bb, c) += 2.0 * bound * frac_scale * d[1];
          pre(bins + bb, c) += 2.0 * bound * frac_scale * d[3];
          pre(2 * bins + bb, c) += d[4];
          pre(2 * bins + bb + 1, c) += d[5];
          pre(3 * bins + 1 + bb, c) += d[6];
        }
        if (!want_raw) return;
        MatrixXd& gr = tp.grad_ref(ir);
        const MatrixXd& rv = tp.value(ir);
        for (Eigen::Index c = 0; c < m; ++c) {
          const double dot_w = sw.col(c).dot(pre.col(c).head(bins));
          const double dot_h = sh.col(c).dot(pre.col(c).segment(bins, bins));
          for (Eigen::Index j = 0; j < bins; ++j) {
            gr(j, c) += sw(j, c) * (pre(j, c) - dot_w);
            gr(bins + j, c) += sh(j, c) * (pre(bins + j, c) - dot_h);
          }
          for (Eigen::Index j = 1; j < bins; ++j)
            gr(2 * bins + j - 1, c) += pre(2 * bins + j, c) * detail::logistic(rv(2 * bins + j - 1, c) + shift);
          for (Eigen::Index j = 0; j < bins; ++j) {
            const double s = detail::logistic(rv(3 * bins - 1 + j, c));
            gr(3 * bins - 1 + j, c) += pre(3 * bins + 1 + j, c) * kLambdaSpan * s * (1.0 - s);
          }
        }
      },
      "spline", {ir, ix});
}

}  // namespace causal_reduction::flow
