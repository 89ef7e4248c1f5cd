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
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "causal_reduction/errors.hpp"

/// Finite-state causal Bayesian networks X <- Z -> Y, X -> Y and their
/// reduction to a single confounder W that lives in the treatment space.
///
/// Kernels are stored as dense row-major tables:
///   p_x_given_z   [z][x]
///   p_y_given_xz  [x][z][y]
///   p_y_given_xw  [x][w][y]
namespace causal_reduction::discrete {

inline constexpr std::size_t kMaxCardinality = 64;
inline constexpr double kRenormalizeTolerance = 1e-9;

/// Observational joint p(x, y) as a card_x x card_y matrix.
using JointTable = Eigen::MatrixXd;
/// Markov kernel x -> simplex(Y), one row per x.
using KernelTable = Eigen::MatrixXd;

namespace detail {

inline void check_cardinality(std::size_t card, std::size_t minimum, const char* name) {
  if (card < minimum || card > kMaxCardinality)
    throw DataError(std::string(name) + " must lie in [" + std::to_string(minimum) + ", " +
                    std::to_string(kMaxCardinality) + "], got " + std::to_string(card));
}

// Validates a stack of probability vectors of length `width`. Rows within
// kRenormalizeTolerance of the simplex are renormalized in place.
inline void normalize_rows(std::vector<double>& table, std::size_t rows, std::size_t width,
                           const std::string& name) {
  if (table.size() != rows * width)
    throw DataError(name + ": expected " + std::to_string(rows * width) + " entries, got " +
                    std::to_string(table.size()));
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t k = 0; k < width; ++k) {
      double& p = table[r * width + k];
      if (!std::isfinite(p)) throw DataError(name + ": non-finite entry in row " + std::to_string(r));
      if (p < 0.0) {
        if (p < -kRenormalizeTolerance)
          throw DataError(name + ": negative entry in row " + std::to_string(r));
        p = 0.0;
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRenormalizeTolerance)
      throw DataError(name + ": row " + std::to_string(r) + " sums to " + std::to_string(sum));
    for (std::size_t k = 0; k < width; ++k) table[r * width + k] /= sum;
  }
}

}  // namespace detail

class DiscreteCBN {
 public:
  DiscreteCBN(std::size_t card_x, std::size_t card_y, std::size_t card_z, std::vector<double> p_z,
              std::vector<double> p_x_given_z, std::vector<double> p_y_given_xz)
      : card_x_(card_x),
        card_y_(card_y),
        card_z_(card_z),
        p_z_(std::move(p_z)),
        p_x_given_z_(std::move(p_x_given_z)),
        p_y_given_xz_(std::move(p_y_given_xz)) {
    detail::check_cardinality(card_x_, 2, "card_x");
    detail::check_cardinality(card_y_, 2, "card_y");
    detail::check_cardinality(card_z_, 1, "card_z");
    detail::normalize_rows(p_z_, 1, card_z_, "p_z");
    detail::normalize_rows(p_x_given_z_, card_z_, card_x_, "p_x_given_z");
    detail::normalize_rows(p_y_given_xz_, card_x_ * card_z_, card_y_, "p_y_given_xz");
  }

  std::size_t card_x() const { return card_x_; }
  std::size_t card_y() const { return card_y_; }
  std::size_t card_z() const { return card_z_; }

  double p_z(std::size_t z) const { return p_z_[z]; }
  double p_x_given_z(std::size_t z, std::size_t x) const { return p_x_given_z_[z * card_x_ + x]; }
  double p_y_given_xz(std::size_t x, std::size_t z, std::size_t y) const {
    return p_y_given_xz_[(x * card_z_ + z) * card_y_ + y];
  }

  const std::vector<double>& p_z_table() const { return p_z_; }
  const std::vector<double>& p_x_given_z_table() const { return p_x_given_z_; }
  const std::vector<double>& p_y_given_xz_table() const { return p_y_given_xz_; }

 private:
  std::size_t card_x_, card_y_, card_z_;
  std::vector<double> p_z_, p_x_given_z_, p_y_given_xz_;
};

/// Reduced model over (X, Y, W) with p(x|w) = delta_w(x). W shares the
/// treatment space, so there are card_x latent states.
class ReducedDiscreteModel {
 public:
  ReducedDiscreteModel(std::size_t card_x, std::size_t card_y, std::vector<double> p_w,
                       std::vector<double> p_y_given_xw, std::vector<bool> undefined_w = {})
      : card_x_(card_x),
        card_y_(card_y),
        p_w_(std::move(p_w)),
        p_y_given_xw_(std::move(p_y_given_xw)),
        undefined_w_(std::move(undefined_w)) {
    detail::check_cardinality(card_x_, 2, "card_x");
    detail::check_cardinality(card_y_, 2, "card_y");
    detail::normalize_rows(p_w_, 1, card_x_, "p_w");
    detail::normalize_rows(p_y_given_xw_, card_x_ * card_x_, card_y_, "p_y_given_xw");
    if (undefined_w_.empty()) undefined_w_.assign(card_x_, false);
    if (undefined_w_.size() != card_x_) throw DataError("undefined_w: wrong length");
  }

  std::size_t card_x() const { return card_x_; }
  std::size_t card_y() const { return card_y_; }

  double p_w(std::size_t w) const { return p_w_[w]; }
  double p_y_given_xw(std::size_t x, std::size_t w, std::size_t y) const {
    return p_y_given_xw_[(x * card_x_ + w) * card_y_ + y];
  }
  /// True when p_w[w] == 0 and the kernel rows for w were filled uniformly.
  bool is_undefined(std::size_t w) const { return undefined_w_[w]; }
  bool has_undefined_rows() const {
    for (bool b : undefined_w_)
      if (b) return true;
    return false;
  }

  const std::vector<double>& p_w_table() const { return p_w_; }
  const std::vector<double>& p_y_given_xw_table() const { return p_y_given_xw_; }
  const std::vector<bool>& undefined_rows() const { return undefined_w_; }

 private:
  std::size_t card_x_, card_y_;
  std::vector<double> p_w_, p_y_given_xw_;
  std::vector<bool> undefined_w_;
};

/// Joint law of the observational treatment xi and the potential-outcome
/// function eta over card_x * card_y^card_x atoms. Atom index is
/// xi * card_y^card_x + sum_x eta(x) * card_y^x.
class PotentialOutcomeModel {
 public:
  PotentialOutcomeModel(std::size_t card_x, std::size_t card_y, std::vector<double> joint)
      : card_x_(card_x), card_y_(card_y), joint_(std::move(joint)) {
    detail::check_cardinality(card_x_, 2, "card_x");
    detail::check_cardinality(card_y_, 2, "card_y");
    double functions = std::pow(static_cast<double>(card_y_), static_cast<double>(card_x_));
    if (functions * static_cast<double>(card_x_) > 1e7)
      throw DataError("potential-outcome table too large");
    num_functions_ = static_cast<std::size_t>(functions);
    detail::normalize_rows(joint_, 1, card_x_ * num_functions_, "joint");
  }

  std::size_t card_x() const { return card_x_; }
  std::size_t card_y() const { return card_y_; }
  std::size_t num_functions() const { return num_functions_; }
  std::size_t num_atoms() const { return joint_.size(); }

  double p(std::size_t xi, std::size_t eta) const { return joint_[xi * num_functions_ + eta]; }
  /// Value of the encoded potential-outcome function eta at treatment x.
  std::size_t outcome(std::size_t eta, std::size_t x) const {
    for (std::size_t k = 0; k < x; ++k) eta /= card_y_;
    return eta % card_y_;
  }
  const std::vector<double>& table() const { return joint_; }

 private:
  std::size_t card_x_, card_y_;
  std::size_t num_functions_ = 0;
  std::vector<double> joint_;
};

/// CBN with an additional observed confounder C of both X and Y.
/// Tables: p_c [c], p_z_given_c [c][z], p_x_given_zc [c][z][x],
/// p_y_given_xzc [c][x][z][y].
class DiscreteCBNWithC {
 public:
  DiscreteCBNWithC(std::size_t card_x, std::size_t card_y, std::size_t card_z, std::size_t card_c,
                   std::vector<double> p_c, std::vector<double> p_z_given_c,
                   std::vector<double> p_x_given_zc, std::vector<double> p_y_given_xzc)
      : card_x_(card_x),
        card_y_(card_y),
        card_z_(card_z),
        card_c_(card_c),
        p_c_(std::move(p_c)),
        p_z_given_c_(std::move(p_z_given_c)),
        p_x_given_zc_(std::move(p_x_given_zc)),
        p_y_given_xzc_(std::move(p_y_given_xzc)) {
    detail::check_cardinality(card_x_, 2, "card_x");
    detail::check_cardinality(card_y_, 2, "card_y");
    detail::check_cardinality(card_z_, 1, "card_z");
    detail::check_cardinality(card_c_, 1, "card_c");
    detail::normalize_rows(p_c_, 1, card_c_, "p_c");
    detail::normalize_rows(p_z_given_c_, card_c_, card_z_, "p_z_given_c");
    detail::normalize_rows(p_x_given_zc_, card_c_ * card_z_, card_x_, "p_x_given_zc");
    detail::normalize_rows(p_y_given_xzc_, card_c_ * card_x_ * card_z_, card_y_, "p_y_given_xzc");
  }

  std::size_t card_x() const { return card_x_; }
  std::size_t card_y() const { return card_y_; }
  std::size_t card_z() const { return card_z_; }
  std::size_t card_c() const { return card_c_; }
  double p_c(std::size_t c) const { return p_c_[c]; }

  /// The CBN obtained by conditioning on C = c.
  DiscreteCBN stratum(std::size_t c) const {
    std::vector<double> pz(p_z_given_c_.begin() + static_cast<std::ptrdiff_t>(c * card_z_),
                           p_z_given_c_.begin() + static_cast<std::ptrdiff_t>((c + 1) * card_z_));
    const std::size_t nx = card_z_ * card_x_;
    std::vector<double> px(p_x_given_zc_.begin() + static_cast<std::ptrdiff_t>(c * nx),
                           p_x_given_zc_.begin() + static_cast<std::ptrdiff_t>((c + 1) * nx));
    const std::size_t ny = card_x_ * card_z_ * card_y_;
    std::vector<double> py(p_y_given_xzc_.begin() + static_cast<std::ptrdiff_t>(c * ny),
                           p_y_given_xzc_.begin() + static_cast<std::ptrdiff_t>((c + 1) * ny));
    return DiscreteCBN(card_x_, card_y_, card_z_, std::move(pz), std::move(px), std::move(py));
  }

 private:
  std::size_t card_x_, card_y_, card_z_, card_c_;
  std::vector<double> p_c_, p_z_given_c_, p_x_given_zc_, p_y_given_xzc_;
};

/// Replaces the latent Z by W in the treatment space:
///   p(w)       = sum_z p(x=w|z) p(z)
///   p(y|x,w)   = sum_z p(y|x,z) p(z|w),   p(z|w) = p(x=w|z) p(z) / p(w).
/// Rows with p(w) = 0 are filled uniformly and flagged; they carry zero
/// weight in every entailed distribution.
inline ReducedDiscreteModel reduce(const DiscreteCBN& m) {
  const std::size_t nx = m.card_x(), ny = m.card_y(), nz = m.card_z();
  std::vector<double> p_w(nx, 0.0);
  for (std::size_t w = 0; w < nx; ++w)
    for (std::size_t z = 0; z < nz; ++z) p_w[w] += m.p_x_given_z(z, w) * m.p_z(z);

  std::vector<double> kernel(nx * nx * ny, 0.0);
  std::vector<bool> undefined(nx, false);
  std::vector<double> p_z_given_w(nz);
  for (std::size_t w = 0; w < nx; ++w) {
    if (p_w[w] <= 0.0) {
      undefined[w] = true;
      for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y)
          kernel[(x * nx + w) * ny + y] = 1.0 / static_cast<double>(ny);
      continue;
    }
    for (std::size_t z = 0; z < nz; ++z) p_z_given_w[z] = m.p_x_given_z(z, w) * m.p_z(z) / p_w[w];
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y) {
        double s = 0.0;
        for (std::size_t z = 0; z < nz; ++z) s += m.p_y_given_xz(x, z, y) * p_z_given_w[z];
        kernel[(x * nx + w) * ny + y] = s;
      }
  }
  return ReducedDiscreteModel(nx, ny, std::move(p_w), std::move(kernel), std::move(undefined));
}

/// The CBN over (X, Y, Z := W) that a reduced model denotes.
inline DiscreteCBN as_cbn(const ReducedDiscreteModel& r) {
  const std::size_t nx = r.card_x(), ny = r.card_y();
  std::vector<double> px(nx * nx, 0.0);
  for (std::size_t w = 0; w < nx; ++w) px[w * nx + w] = 1.0;
  // p_y_given_xw is [x][w][y], which is the [x][z][y] layout with z := w.
  return DiscreteCBN(nx, ny, nx, r.p_w_table(), std::move(px), r.p_y_given_xw_table());
}

inline JointTable observational_joint(const DiscreteCBN& m) {
  JointTable j = JointTable::Zero(static_cast<Eigen::Index>(m.card_x()),
                                  static_cast<Eigen::Index>(m.card_y()));
  for (std::size_t x = 0; x < m.card_x(); ++x)
    for (std::size_t y = 0; y < m.card_y(); ++y) {
      double s = 0.0;
      for (std::size_t z = 0; z < m.card_z(); ++z)
        s += m.p_y_given_xz(x, z, y) * m.p_x_given_z(z, x) * m.p_z(z);
      j(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = s;
    }
  return j;
}

/// p(x, y) = p_w[x] * p(y | X=x, W=x).
inline JointTable observational_joint(const ReducedDiscreteModel& r) {
  JointTable j(static_cast<Eigen::Index>(r.card_x()), static_cast<Eigen::Index>(r.card_y()));
  for (std::size_t x = 0; x < r.card_x(); ++x)
    for (std::size_t y = 0; y < r.card_y(); ++y)
      j(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = r.p_w(x) * r.p_y_given_xw(x, x, y);
  return j;
}

/// Truncated factorization p(y | do(x)) = sum_z p(y|x,z) p(z).
inline KernelTable interventional_kernel(const DiscreteCBN& m) {
  KernelTable k(static_cast<Eigen::Index>(m.card_x()), static_cast<Eigen::Index>(m.card_y()));
  for (std::size_t x = 0; x < m.card_x(); ++x)
    for (std::size_t y = 0; y < m.card_y(); ++y) {
      double s = 0.0;
      for (std::size_t z = 0; z < m.card_z(); ++z) s += m.p_y_given_xz(x, z, y) * m.p_z(z);
      k(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = s;
    }
  return k;
}

/// p(y | do(x)) = sum_w p_w[w] p(y|x,w).
inline KernelTable interventional_kernel(const ReducedDiscreteModel& r) {
  KernelTable k(static_cast<Eigen::Index>(r.card_x()), static_cast<Eigen::Index>(r.card_y()));
  for (std::size_t x = 0; x < r.card_x(); ++x)
    for (std::size_t y = 0; y < r.card_y(); ++y) {
      double s = 0.0;
      for (std::size_t w = 0; w < r.card_x(); ++w) s += r.p_w(w) * r.p_y_given_xw(x, w, y);
      k(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = s;
    }
  return k;
}

/// p_w = law of xi, p(y|x,w) = law of eta(x) given xi = w.
inline ReducedDiscreteModel reduce_from_potential_outcomes(const PotentialOutcomeModel& po) {
  const std::size_t nx = po.card_x(), ny = po.card_y(), nf = po.num_functions();
  std::vector<double> p_w(nx, 0.0);
  std::vector<double> kernel(nx * nx * ny, 0.0);
  std::vector<bool> undefined(nx, false);
  for (std::size_t w = 0; w < nx; ++w) {
    for (std::size_t eta = 0; eta < nf; ++eta) {
      const double p = po.p(w, eta);
      p_w[w] += p;
      for (std::size_t x = 0; x < nx; ++x) kernel[(x * nx + w) * ny + po.outcome(eta, x)] += p;
    }
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y) {
        double& k = kernel[(x * nx + w) * ny + y];
        k = p_w[w] > 0.0 ? k / p_w[w] : 1.0 / static_cast<double>(ny);
      }
    undefined[w] = p_w[w] <= 0.0;
  }
  return ReducedDiscreteModel(nx, ny, std::move(p_w), std::move(kernel), std::move(undefined));
}

struct StratumReduction {
  std::size_t c;
  ReducedDiscreteModel model;
};

/// One reduced model per stratum c with p(c) > 0. Each reproduces
/// p(x, y | c) and p(y | do(x), c).
inline std::vector<StratumReduction> reduce_with_observed_confounder(const DiscreteCBNWithC& m) {
  std::vector<StratumReduction> out;
  for (std::size_t c = 0; c < m.card_c(); ++c) {
    if (m.p_c(c) <= 0.0) continue;
    out.push_back({c, reduce(m.stratum(c))});
  }
  return out;
}

}  // namespace causal_reduction::discrete
