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
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace causal_reduction {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

/// Floor applied to log-densities before they enter losses or reports.
inline constexpr double kLogDensityFloor = -745.0;

inline double standard_normal_log_pdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

/// Composite trapezoid weights for an arbitrary (sorted) abscissa.
inline std::vector<double> trapezoid_weights(std::span<const double> nodes) {
  std::vector<double> w(nodes.size(), 0.0);
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    const double h = 0.5 * (nodes[i] - nodes[i - 1]);
    w[i - 1] += h;
    w[i] += h;
  }
  return w;
}

inline double trapezoid(std::span<const double> nodes, std::span<const double> values) {
  double s = 0.0;
  for (std::size_t i = 1; i < nodes.size(); ++i)
    s += 0.5 * (nodes[i] - nodes[i - 1]) * (values[i] + values[i - 1]);
  return s;
}

/// Running trapezoid integral; out[0] = 0.
inline std::vector<double> cumulative_trapezoid(std::span<const double> nodes,
                                                std::span<const double> values) {
  std::vector<double> out(nodes.size(), 0.0);
  for (std::size_t i = 1; i < nodes.size(); ++i)
    out[i] = out[i - 1] + 0.5 * (nodes[i] - nodes[i - 1]) * (values[i] + values[i - 1]);
  return out;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  v.back() = hi;
  return v;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Population variance (divides by n), matching the standardization recipe.
inline double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

}  // namespace causal_reduction
