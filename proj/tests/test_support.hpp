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

#include <cstddef>
#include <random>
#include <vector>

#include "causal_reduction/discrete_core.hpp"
#include "causal_reduction/random.hpp"

namespace test_support {

using causal_reduction::Rng;
namespace crd = causal_reduction::discrete;

// Flat Dirichlet(alpha) draw; small alpha produces near-degenerate rows.
inline std::vector<double> dirichlet(std::size_t k, Rng& rng, double alpha = 1.0) {
  std::gamma_distribution<double> g(alpha, 1.0);
  std::vector<double> v(k);
  double s = 0.0;
  for (double& x : v) s += x = g(rng) + 1e-300;
  for (double& x : v) x /= s;
  return v;
}

inline std::vector<double> stochastic_rows(std::size_t rows, std::size_t width, Rng& rng, double alpha = 1.0) {
  std::vector<double> out;
  out.reserve(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = dirichlet(width, rng, alpha);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

inline crd::DiscreteCBN random_cbn(std::size_t nx, std::size_t ny, std::size_t nz, Rng& rng, double alpha = 1.0) {
  return crd::DiscreteCBN(nx, ny, nz, dirichlet(nz, rng, alpha), stochastic_rows(nz, nx, rng, alpha),
                          stochastic_rows(nx * nz, ny, rng, alpha));
}

// Direct triple sum p(x,y) = sum_z p(y|x,z) p(x|z) p(z), from the accessors only.
inline std::vector<std::vector<double>> oracle_joint(const crd::DiscreteCBN& m) {
  std::vector<std::vector<double>> j(m.card_x(), std::vector<double>(m.card_y(), 0.0));
  for (std::size_t z = 0; z < m.card_z(); ++z)
    for (std::size_t x = 0; x < m.card_x(); ++x)
      for (std::size_t y = 0; y < m.card_y(); ++y)
        j[x][y] += m.p_y_given_xz(x, z, y) * m.p_x_given_z(z, x) * m.p_z(z);
  return j;
}

// Truncated factorization: p(y | do(x)) = sum_z p(y|x,z) p(z).
inline std::vector<std::vector<double>> oracle_do(const crd::DiscreteCBN& m) {
  std::vector<std::vector<double>> k(m.card_x(), std::vector<double>(m.card_y(), 0.0));
  for (std::size_t z = 0; z < m.card_z(); ++z)
    for (std::size_t x = 0; x < m.card_x(); ++x)
      for (std::size_t y = 0; y < m.card_y(); ++y) k[x][y] += m.p_y_given_xz(x, z, y) * m.p_z(z);
  return k;
}

// Reduced model read through the generic CBN formulae with Z := W, p(x|w) = delta.
inline std::vector<std::vector<double>> oracle_joint(const crd::ReducedDiscreteModel& r) {
  std::vector<std::vector<double>> j(r.card_x(), std::vector<double>(r.card_y(), 0.0));
  for (std::size_t w = 0; w < r.card_x(); ++w)
    for (std::size_t x = 0; x < r.card_x(); ++x)
      for (std::size_t y = 0; y < r.card_y(); ++y)
        j[x][y] += r.p_y_given_xw(x, w, y) * (x == w ? 1.0 : 0.0) * r.p_w(w);
  return j;
}

inline std::vector<std::vector<double>> oracle_do(const crd::ReducedDiscreteModel& r) {
  std::vector<std::vector<double>> k(r.card_x(), std::vector<double>(r.card_y(), 0.0));
  for (std::size_t w = 0; w < r.card_x(); ++w)
    for (std::size_t x = 0; x < r.card_x(); ++x)
      for (std::size_t y = 0; y < r.card_y(); ++y) k[x][y] += r.p_y_given_xw(x, w, y) * r.p_w(w);
  return k;
}

// Potential outcomes: decode eta by repeated division, independent of the
// library's outcome() helper.
struct AtomTables {
  std::vector<std::vector<double>> joint;  // p(xi = x, eta(xi) = y)
  std::vector<std::vector<double>> doit;   // p(eta(x) = y)
};

inline AtomTables oracle_atoms(const crd::PotentialOutcomeModel& po) {
  const std::size_t nx = po.card_x(), ny = po.card_y();
  AtomTables t{std::vector<std::vector<double>>(nx, std::vector<double>(ny, 0.0)),
               std::vector<std::vector<double>>(nx, std::vector<double>(ny, 0.0))};
  std::size_t nf = 1;
  for (std::size_t i = 0; i < nx; ++i) nf *= ny;
  for (std::size_t xi = 0; xi < nx; ++xi)
    for (std::size_t eta = 0; eta < nf; ++eta) {
      std::vector<std::size_t> digits(nx);
      std::size_t rest = eta;
      for (std::size_t x = 0; x < nx; ++x) {
        digits[x] = rest % ny;
        rest /= ny;
      }
      const double p = po.table()[xi * nf + eta];
      t.joint[xi][digits[xi]] += p;
      for (std::size_t x = 0; x < nx; ++x) t.doit[x][digits[x]] += p;
    }
  return t;
}

template <typename Table>
double max_abs_diff(const Table& a, const std::vector<std::vector<double>>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b[i].size(); ++j)
      d = std::max(d, std::abs(a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - b[i][j]));
  return d;
}

}  // namespace test_support
