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
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causal_reduction/discrete_core.hpp"
#include "causal_reduction/errors.hpp"
#include "causal_reduction/parallel.hpp"
#include "causal_reduction/random.hpp"

/// Maximum-likelihood estimation of p(w), p(y|x) and p(y|do(x)) from
/// observational and interventional counts under the reduction constraints
///   phi_x theta_{y|x} <= psi_{y|x} <= phi_x theta_{y|x} + 1 - phi_x.
namespace causal_reduction::discrete {

struct DiscreteParams {
  Eigen::VectorXd phi;  // p(w) = p(x), length card_x
  KernelTable theta;    // p(y | x)
  KernelTable psi;      // p(y | do(x))

  std::size_t card_x() const { return static_cast<std::size_t>(phi.size()); }
  std::size_t card_y() const { return static_cast<std::size_t>(theta.cols()); }
};

/// Largest violation of the simplex and coupling constraints (0 if feasible).
inline double constraint_violation(const DiscreteParams& p) {
  double v = std::abs(p.phi.sum() - 1.0);
  v = std::max(v, -p.phi.minCoeff());
  for (Eigen::Index x = 0; x < p.theta.rows(); ++x) {
    v = std::max(v, std::abs(p.theta.row(x).sum() - 1.0));
    v = std::max(v, std::abs(p.psi.row(x).sum() - 1.0));
    for (Eigen::Index y = 0; y < p.theta.cols(); ++y) {
      const double lo = p.phi[x] * p.theta(x, y);
      const double hi = lo + 1.0 - p.phi[x];
      v = std::max({v, -p.theta(x, y), -p.psi(x, y), lo - p.psi(x, y), p.psi(x, y) - hi});
    }
  }
  return v;
}

class CountTables {
 public:
  /// n_obs(x, y) = N^O_{xy}; n_int(x, y) = N^I_{y|x}.
  CountTables(Eigen::MatrixXd n_obs, Eigen::MatrixXd n_int)
      : n_obs_(std::move(n_obs)), n_int_(std::move(n_int)) {
    if (n_obs_.rows() != n_int_.rows() || n_obs_.cols() != n_int_.cols())
      throw DataError("count tables must have equal shape");
    if (n_obs_.rows() < 2 || n_obs_.cols() < 2) throw DataError("count tables need >= 2 rows and columns");
    for (const Eigen::MatrixXd* m : {&n_obs_, &n_int_})
      for (Eigen::Index i = 0; i < m->size(); ++i) {
        const double c = m->data()[i];
        if (!(c >= 0.0) || c != std::floor(c)) throw DataError("counts must be non-negative integers");
      }
  }

  static CountTables zeros(std::size_t card_x, std::size_t card_y) {
    const auto nx = static_cast<Eigen::Index>(card_x), ny = static_cast<Eigen::Index>(card_y);
    return CountTables(Eigen::MatrixXd::Zero(nx, ny), Eigen::MatrixXd::Zero(nx, ny));
  }

  std::size_t card_x() const { return static_cast<std::size_t>(n_obs_.rows()); }
  std::size_t card_y() const { return static_cast<std::size_t>(n_obs_.cols()); }
  const Eigen::MatrixXd& n_obs() const { return n_obs_; }
  const Eigen::MatrixXd& n_int() const { return n_int_; }

  double obs_total() const { return n_obs_.sum(); }
  double int_total() const { return n_int_.sum(); }
  double obs_row_total(std::size_t x) const { return n_obs_.row(static_cast<Eigen::Index>(x)).sum(); }
  double int_arm_total(std::size_t x) const { return n_int_.row(static_cast<Eigen::Index>(x)).sum(); }

 private:
  Eigen::MatrixXd n_obs_, n_int_;
};

namespace detail {

inline double xlogy(double n, double p) {
  if (n == 0.0) return 0.0;
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  return n * std::log(p);
}

}  // namespace detail

inline double joint_log_likelihood(const DiscreteParams& p, const CountTables& c) {
  double ll = 0.0;
  for (Eigen::Index x = 0; x < c.n_obs().rows(); ++x)
    for (Eigen::Index y = 0; y < c.n_obs().cols(); ++y) {
      ll += detail::xlogy(c.n_int()(x, y), p.psi(x, y));
      const double n = c.n_obs()(x, y);
      ll += detail::xlogy(n, p.phi[x]) + detail::xlogy(n, p.theta(x, y));
    }
  return ll;
}

struct ObservationalFit {
  Eigen::VectorXd phi;
  KernelTable theta;
  std::vector<bool> undefined_rows;  // N^O_{x+} = 0, theta row set uniform
};

/// Empirical frequencies phi_x = N_{x+}/N_{++}, theta_{y|x} = N_{xy}/N_{x+}.
inline ObservationalFit fit_observational(const CountTables& c) {
  const double total = c.obs_total();
  if (total <= 0.0) throw DataError("fit_observational: no observational data");
  const auto nx = c.n_obs().rows(), ny = c.n_obs().cols();
  ObservationalFit fit{Eigen::VectorXd(nx), KernelTable(nx, ny), std::vector<bool>(nx, false)};
  for (Eigen::Index x = 0; x < nx; ++x) {
    const double row = c.n_obs().row(x).sum();
    fit.phi[x] = row / total;
    if (row > 0.0) {
      fit.theta.row(x) = c.n_obs().row(x) / row;
    } else {
      fit.theta.row(x).setConstant(1.0 / static_cast<double>(ny));
      fit.undefined_rows[static_cast<std::size_t>(x)] = true;
    }
  }
  return fit;
}

struct ClippedPsi {
  KernelTable psi;
  std::vector<bool> empty_arm;       // N^I_{+|x} = 0: slack split evenly (interval midpoint for binary Y)
  std::vector<bool> clipped;         // per (x, y), row-major
  std::vector<bool> row_infeasible;  // every entry clipped and normalization could not be restored
};

/// Per-entry clipping of the interventional frequencies to the observational
/// bounds. When clipping breaks the row normalization, the residual is
/// distributed over the unclipped entries in proportion to their remaining
/// slack inside the box; if those cannot absorb it, all entries share it.
inline ClippedPsi clipped_psi(const Eigen::VectorXd& phi_hat, const KernelTable& theta_hat,
                              const CountTables& c) {
  const auto nx = theta_hat.rows(), ny = theta_hat.cols();
  if (phi_hat.size() != nx || c.n_int().rows() != nx || c.n_int().cols() != ny)
    throw DataError("clipped_psi: shape mismatch");
  ClippedPsi out{KernelTable(nx, ny), std::vector<bool>(nx, false),
                 std::vector<bool>(static_cast<std::size_t>(nx * ny), false), std::vector<bool>(nx, false)};
  std::vector<double> lo(ny), hi(ny);
  for (Eigen::Index x = 0; x < nx; ++x) {
    const double phi = phi_hat[x];
    for (Eigen::Index y = 0; y < ny; ++y) {
      lo[y] = phi * theta_hat(x, y);
      hi[y] = lo[y] + 1.0 - phi;
    }
    const double arm = c.n_int().row(x).sum();
    if (arm <= 0.0) {
      out.empty_arm[x] = true;
      for (Eigen::Index y = 0; y < ny; ++y) out.psi(x, y) = lo[y] + (1.0 - phi) / static_cast<double>(ny);
      continue;
    }
    std::vector<bool> was_clipped(ny, false);
    double sum = 0.0;
    for (Eigen::Index y = 0; y < ny; ++y) {
      const double emp = c.n_int()(x, y) / arm;
      double v = emp;
      if (emp < lo[y]) {
        v = lo[y];
        was_clipped[y] = true;
      } else if (emp > hi[y]) {
        v = hi[y];
        was_clipped[y] = true;
      }
      out.psi(x, y) = v;
      out.clipped[static_cast<std::size_t>(x * ny + y)] = was_clipped[y];
      sum += v;
    }
    double residual = 1.0 - sum;
    // Two passes: unclipped entries first, then every entry.
    for (int pass = 0; pass < 2 && residual != 0.0; ++pass) {
      double slack = 0.0;
      for (Eigen::Index y = 0; y < ny; ++y) {
        if (pass == 0 && was_clipped[y]) continue;
        slack += residual > 0.0 ? hi[y] - out.psi(x, y) : out.psi(x, y) - lo[y];
      }
      if (slack <= 0.0) continue;
      const double share = std::min(1.0, std::abs(residual) / slack);
      double moved = 0.0;
      for (Eigen::Index y = 0; y < ny; ++y) {
        if (pass == 0 && was_clipped[y]) continue;
        const double room = residual > 0.0 ? hi[y] - out.psi(x, y) : out.psi(x, y) - lo[y];
        const double delta = share * room;
        out.psi(x, y) += residual > 0.0 ? delta : -delta;
        moved += delta;
      }
      residual += residual > 0.0 ? -moved : moved;
      if (std::abs(residual) < 1e-15) residual = 0.0;
    }
    if (std::abs(residual) > 1e-12) out.row_infeasible[x] = true;
  }
  return out;
}

struct OptimizerConfig {
  int max_iterations = 10000;
  double tolerance = 1e-13;  // relative objective improvement
};

struct ExactMleResult {
  DiscreteParams params;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<bool> undefined_theta_rows;
};

namespace detail {

// Solves max sum_y n_y log psi_y  s.t. psi_y >= q_y, sum_y psi_y = 1.
// psi_y = max(q_y, n_y / mu); returns the multipliers lambda_y of the
// lower-bound constraints, so that d(value)/d(q_y) = -lambda_y.
struct WaterFill {
  std::vector<double> psi, lambda;
};

inline WaterFill water_fill(const std::vector<double>& q, const std::vector<double>& n) {
  const std::size_t ny = q.size();
  WaterFill out{std::vector<double>(ny), std::vector<double>(ny, 0.0)};
  const double phi = std::accumulate(q.begin(), q.end(), 0.0);
  const double total = std::accumulate(n.begin(), n.end(), 0.0);
  if (total <= 0.0) {
    for (std::size_t y = 0; y < ny; ++y) out.psi[y] = q[y] + (1.0 - phi) / static_cast<double>(ny);
    return out;
  }
  // Entry y is unconstrained iff mu < n_y / q_y. Scan breakpoints downward.
  std::vector<std::size_t> order;
  for (std::size_t y = 0; y < ny; ++y)
    if (n[y] > 0.0) order.push_back(y);
  auto breakpoint = [&](std::size_t y) {
    return q[y] > 0.0 ? n[y] / q[y] : std::numeric_limits<double>::infinity();
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return breakpoint(a) > breakpoint(b); });
  double free_counts = 0.0, free_q = 0.0, mu = -1.0;
  std::size_t k = 0;
  for (; k < order.size(); ++k) {
    free_counts += n[order[k]];
    free_q += q[order[k]];
    const double denom = 1.0 - phi + free_q;
    if (denom <= 0.0) continue;
    const double candidate = free_counts / denom;
    const double next = k + 1 < order.size() ? breakpoint(order[k + 1]) : 0.0;
    if (candidate >= next && candidate <= breakpoint(order[k])) {
      mu = candidate;
      break;
    }
  }
  if (mu <= 0.0) {
    // Degenerate: the box leaves no slack (phi = 1 with all mass bound).
    for (std::size_t y = 0; y < ny; ++y) out.psi[y] = phi > 0.0 ? q[y] / phi : 1.0 / static_cast<double>(ny);
    return out;
  }
  std::vector<bool> is_free(ny, false);
  for (std::size_t j = 0; j <= k; ++j) is_free[order[j]] = true;
  for (std::size_t y = 0; y < ny; ++y) {
    if (is_free[y]) {
      out.psi[y] = n[y] / mu;
    } else {
      out.psi[y] = q[y];
      out.lambda[y] = q[y] > 0.0 ? std::max(0.0, mu - n[y] / q[y]) : mu;
    }
  }
  return out;
}

struct JointState {
  std::vector<double> q;  // row-major card_x x card_y joint
  std::vector<WaterFill> rows;
  double objective = -std::numeric_limits<double>::infinity();
};

inline JointState evaluate_joint(std::vector<double> q, const CountTables& c) {
  const std::size_t nx = c.card_x(), ny = c.card_y();
  JointState s{std::move(q), {}, 0.0};
  s.rows.reserve(nx);
  std::vector<double> qrow(ny), nrow(ny);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      qrow[y] = s.q[x * ny + y];
      nrow[y] = c.n_int()(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
      s.objective += xlogy(c.n_obs()(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)), qrow[y]);
    }
    s.rows.push_back(water_fill(qrow, nrow));
    for (std::size_t y = 0; y < ny; ++y) s.objective += xlogy(nrow[y], s.rows.back().psi[y]);
  }
  return s;
}

inline DiscreteParams params_from_joint(const JointState& s, std::size_t nx, std::size_t ny,
                                        std::vector<bool>* undefined) {
  DiscreteParams p{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nx)),
                   KernelTable(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny)),
                   KernelTable(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny))};
  if (undefined) undefined->assign(nx, false);
  for (std::size_t x = 0; x < nx; ++x) {
    const auto ix = static_cast<Eigen::Index>(x);
    for (std::size_t y = 0; y < ny; ++y) p.phi[ix] += s.q[x * ny + y];
    for (std::size_t y = 0; y < ny; ++y) {
      const auto iy = static_cast<Eigen::Index>(y);
      p.theta(ix, iy) = p.phi[ix] > 0.0 ? s.q[x * ny + y] / p.phi[ix] : 1.0 / static_cast<double>(ny);
      p.psi(ix, iy) = s.rows[x].psi[y];
    }
    if (undefined && p.phi[ix] <= 0.0) (*undefined)[x] = true;
  }
  return p;
}

}  // namespace detail

/// Exact constrained MLE. The feasible set is parameterized by the joint
/// q_{xy} = phi_x theta_{y|x} and psi; the upper bound follows from the lower
/// bound and normalization, so only psi_{y|x} >= q_{xy} remains. For fixed q
/// the optimal psi is a closed-form water-filling; the outer concave problem
/// over q is solved by gradient ascent in softmax coordinates with
/// backtracking. The result is never worse than the clipped composite.
inline ExactMleResult fit_exact_mle(const CountTables& c, const OptimizerConfig& config = {}) {
  const std::size_t nx = c.card_x(), ny = c.card_y(), cells = nx * ny;
  const double n_total = c.obs_total() + c.int_total();
  if (n_total <= 0.0) throw DataError("fit_exact_mle: no samples");

  // Warm start: empirical joint blended with a little uniform mass so that
  // every softmax coordinate is finite.
  const double obs_total = c.obs_total();
  std::vector<double> logits(cells);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y) {
      const double emp =
          obs_total > 0.0 ? c.n_obs()(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) / obs_total : 0.0;
      const double mix = obs_total > 0.0 ? 1e-6 : 1.0;
      logits[x * ny + y] = std::log((1.0 - mix) * emp + mix / static_cast<double>(cells));
    }
  auto softmax = [cells](const std::vector<double>& l) {
    const double m = *std::max_element(l.begin(), l.end());
    std::vector<double> q(cells);
    double s = 0.0;
    for (std::size_t i = 0; i < cells; ++i) s += q[i] = std::exp(l[i] - m);
    for (double& v : q) v /= s;
    return q;
  };

  detail::JointState state = detail::evaluate_joint(softmax(logits), c);
  double step = 1.0;
  int it = 0;
  bool converged = false;
  std::vector<double> grad(cells), trial(cells);
  for (; it < config.max_iterations; ++it) {
    // d objective / d q_i = N^O_i / q_i - lambda_i; chain through softmax.
    double mean = 0.0;
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y) {
        const std::size_t i = x * ny + y;
        const double nobs = c.n_obs()(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
        grad[i] = nobs - state.rows[x].lambda[y] * state.q[i];  // q_i * dq_i
        mean += grad[i];
      }
    for (std::size_t i = 0; i < cells; ++i) grad[i] = (grad[i] - state.q[i] * mean) / n_total;

    bool improved = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      for (std::size_t i = 0; i < cells; ++i) trial[i] = logits[i] + step * grad[i];
      detail::JointState candidate = detail::evaluate_joint(softmax(trial), c);
      if (candidate.objective >= state.objective) {
        const double gain = candidate.objective - state.objective;
        const double scale = std::max(1.0, std::abs(state.objective));
        logits = trial;
        state = std::move(candidate);
        improved = true;
        step = std::min(step * 1.5, 1e4);
        if (gain <= config.tolerance * scale) converged = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved || converged) {
      converged = true;
      break;
    }
  }

  ExactMleResult result;
  result.params = detail::params_from_joint(state, nx, ny, &result.undefined_theta_rows);
  result.log_likelihood = joint_log_likelihood(result.params, c);
  result.iterations = it;
  result.converged = converged;

  if (obs_total > 0.0) {
    ObservationalFit obs = fit_observational(c);
    ClippedPsi clip = clipped_psi(obs.phi, obs.theta, c);
    DiscreteParams composite{obs.phi, obs.theta, clip.psi};
    const double ll = joint_log_likelihood(composite, c);
    if (ll > result.log_likelihood) {
      result.params = composite;
      result.log_likelihood = ll;
      result.undefined_theta_rows = obs.undefined_rows;
    }
  }
  return result;
}

/// tau = psi_{1|1} - psi_{1|0} for binary X and Y.
inline double ate(const KernelTable& psi) {
  if (psi.rows() != 2 || psi.cols() != 2) throw DataError("ate requires binary treatment and outcome");
  return psi(1, 1) - psi(0, 1);
}

/// Interventional-only estimator N^I_{1|1}/N^I_{+|1} - N^I_{1|0}/N^I_{+|0}.
inline double ate_interventional_only(const CountTables& c) {
  if (c.card_x() != 2 || c.card_y() != 2) throw DataError("ate requires binary treatment and outcome");
  const double n1 = c.int_arm_total(1), n0 = c.int_arm_total(0);
  if (n1 <= 0.0 || n0 <= 0.0) throw DataError("ate_interventional_only: empty interventional arm");
  return c.n_int()(1, 1) / n1 - c.n_int()(0, 1) / n0;
}

struct BoundTable {
  Eigen::MatrixXd lower;  // p(x, y)
  Eigen::MatrixXd upper;  // p(x, y) + 1 - p(x)
};

/// Assumption-free interval for p(y | do(x)) implied by the observational joint.
inline BoundTable bounds(const JointTable& obs_joint) {
  if (obs_joint.minCoeff() < -kRenormalizeTolerance || std::abs(obs_joint.sum() - 1.0) > kRenormalizeTolerance)
    throw DataError("bounds: input is not a probability table");
  BoundTable b{obs_joint, obs_joint};
  for (Eigen::Index x = 0; x < obs_joint.rows(); ++x) {
    const double px = obs_joint.row(x).sum();
    b.upper.row(x).array() += 1.0 - px;
  }
  return b;
}

/// Per-stratum bounds p(x,y|c) <= p(y|do(x),c) <= p(x,y|c) + 1 - p(x|c).
inline std::vector<BoundTable> bounds(const std::vector<JointTable>& strata) {
  std::vector<BoundTable> out;
  out.reserve(strata.size());
  for (const auto& s : strata) out.push_back(bounds(s));
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo comparison of the ATE estimators.

struct ArmAllocation {
  std::size_t untreated = 0;  // do(x = 0)
  std::size_t treated = 0;    // do(x = 1)
};

struct CaseStudyConfig {
  explicit CaseStudyConfig(DiscreteCBN model) : truth(std::move(model)) {}

  DiscreteCBN truth;
  std::size_t n_obs = 100000;
  ArmAllocation combined_arms;           // interventional design for tau^{IO}
  ArmAllocation interventional_arms;     // design for tau^{I}
  std::size_t replications = 2000;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool exact_mle = false;  // use fit_exact_mle instead of the clipped estimator for tau^{IO}
};

struct EstimatorSummary {
  double mean = 0.0, bias = 0.0, variance = 0.0, mse = 0.0;
  std::size_t failures = 0;  // replications where the estimator was undefined
};

struct MonteCarloReport {
  double true_ate = 0.0;
  EstimatorSummary interventional_only;  // tau^{I}
  EstimatorSummary combined;             // tau^{IO}
  std::size_t replications = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline Eigen::MatrixXd sample_multinomial(const JointTable& p, std::size_t n, Rng& rng) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  double remaining_mass = 1.0;
  auto remaining = static_cast<long long>(n);
  for (Eigen::Index i = 0; i < p.size() && remaining > 0; ++i) {
    const double pi = p.data()[i];
    if (i == p.size() - 1 || remaining_mass <= pi) {
      counts.data()[i] = static_cast<double>(remaining);
      break;
    }
    const double prob = std::clamp(pi / remaining_mass, 0.0, 1.0);
    std::binomial_distribution<long long> draw(remaining, prob);
    const long long k = draw(rng);
    counts.data()[i] = static_cast<double>(k);
    remaining -= k;
    remaining_mass -= pi;
  }
  return counts;
}

inline Eigen::MatrixXd sample_arms(const KernelTable& kernel, const ArmAllocation& arms, Rng& rng) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(2, 2);
  const std::array<std::size_t, 2> sizes{arms.untreated, arms.treated};
  for (Eigen::Index x = 0; x < 2; ++x) {
    const auto n = static_cast<long long>(sizes[static_cast<std::size_t>(x)]);
    std::binomial_distribution<long long> draw(n, std::clamp(kernel(x, 1), 0.0, 1.0));
    const long long ones = draw(rng);
    counts(x, 1) = static_cast<double>(ones);
    counts(x, 0) = static_cast<double>(n - ones);
  }
  return counts;
}

inline EstimatorSummary summarize(const std::vector<double>& values, const std::vector<bool>& ok, double truth) {
  EstimatorSummary s;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!ok[i]) {
      ++s.failures;
      continue;
    }
    s.mean += values[i];
    ++n;
  }
  if (n == 0) return s;
  s.mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!ok[i]) continue;
    s.variance += (values[i] - s.mean) * (values[i] - s.mean);
    s.mse += (values[i] - truth) * (values[i] - truth);
  }
  s.variance /= static_cast<double>(n);
  s.mse /= static_cast<double>(n);
  s.bias = s.mean - truth;
  return s;
}

}  // namespace detail

/// Replication r draws from derive_seed(seed, r); the report does not depend
/// on the number of workers.
inline MonteCarloReport rct_case_study(const CaseStudyConfig& cfg) {
  if (cfg.truth.card_x() != 2 || cfg.truth.card_y() != 2)
    throw DataError("rct_case_study requires a binary treatment and outcome");
  const JointTable joint = observational_joint(cfg.truth);
  const KernelTable kernel = interventional_kernel(cfg.truth);
  const double tau = ate(kernel);

  const std::size_t reps = cfg.replications;
  std::vector<double> tau_i(reps, 0.0), tau_io(reps, 0.0);
  std::vector<bool> ok_i(reps, false), ok_io(reps, false);
  parallel_for(reps, cfg.jobs, [&](std::size_t r) {
    Rng rng = make_rng(derive_seed(cfg.seed, r));
    const Eigen::MatrixXd obs = detail::sample_multinomial(joint, cfg.n_obs, rng);
    const Eigen::MatrixXd arm_io = detail::sample_arms(kernel, cfg.combined_arms, rng);
    const Eigen::MatrixXd arm_i = detail::sample_arms(kernel, cfg.interventional_arms, rng);

    const CountTables only_int(Eigen::MatrixXd::Zero(2, 2), arm_i);
    if (only_int.int_arm_total(0) > 0 && only_int.int_arm_total(1) > 0) {
      tau_i[r] = ate_interventional_only(only_int);
      ok_i[r] = true;
    }
    const CountTables combined(obs, arm_io);
    if (combined.obs_total() > 0) {
      if (cfg.exact_mle) {
        tau_io[r] = ate(fit_exact_mle(combined).params.psi);
      } else {
        const ObservationalFit fit = fit_observational(combined);
        tau_io[r] = ate(clipped_psi(fit.phi, fit.theta, combined).psi);
      }
      ok_io[r] = true;
    }
  });

  MonteCarloReport report;
  report.true_ate = tau;
  report.interventional_only = detail::summarize(tau_i, ok_i, tau);
  report.combined = detail::summarize(tau_io, ok_io, tau);
  report.replications = reps;
  report.seed = cfg.seed;
  return report;
}

}  // namespace causal_reduction::discrete
