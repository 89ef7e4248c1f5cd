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
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causal_reduction/errors.hpp"
#include "causal_reduction/random.hpp"

/// Reduced linear-Gaussian SCM
///   X = a + B U,   Y = c + D X + E U + F V,   U ~ N(0, I_M), V ~ N(0, I_N),
/// its observational and interventional Gaussians, and joint estimation.
namespace causal_reduction::linear {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ReducedLinearSCM {
  VectorXd a;  // M
  MatrixXd B;  // M x M lower triangular, diag >= 0
  VectorXd c;  // N
  MatrixXd D;  // N x M
  MatrixXd E;  // N x M
  MatrixXd F;  // N x N lower triangular, diag >= 0

  Eigen::Index dim_x() const { return a.size(); }
  Eigen::Index dim_y() const { return c.size(); }

  void validate() const {
    const Eigen::Index m = dim_x(), n = dim_y();
    if (m < 1 || n < 1) throw DataError("ReducedLinearSCM: empty dimensions");
    if (B.rows() != m || B.cols() != m || D.rows() != n || D.cols() != m || E.rows() != n || E.cols() != m ||
        F.rows() != n || F.cols() != n)
      throw DataError("ReducedLinearSCM: inconsistent shapes");
    auto check_factor = [](const MatrixXd& L, const char* name) {
      for (Eigen::Index i = 0; i < L.rows(); ++i) {
        if (L(i, i) < 0.0) throw DataError(std::string(name) + " has a negative diagonal entry");
        for (Eigen::Index j = i + 1; j < L.cols(); ++j)
          if (L(i, j) != 0.0) throw DataError(std::string(name) + " is not lower triangular");
      }
    };
    check_factor(B, "B");
    check_factor(F, "F");
  }
};

/// alpha, Sigma: p(x). gamma, Delta, Pi: p(y | x). *_t: p(y | do(x)).
struct GaussianRegimeParams {
  VectorXd alpha;
  MatrixXd Sigma;
  VectorXd gamma;
  MatrixXd Delta;
  MatrixXd Pi;
  VectorXd gamma_t;
  MatrixXd Delta_t;
  MatrixXd Pi_t;
};

inline GaussianRegimeParams entailed_params(const ReducedLinearSCM& s) {
  s.validate();
  for (Eigen::Index i = 0; i < s.B.rows(); ++i)
    if (!(s.B(i, i) > 0.0)) throw DataError("entailed_params: B is singular");
  // K = E B^{-1}, computed as the solution of K B = E.
  const MatrixXd K = s.B.transpose().triangularView<Eigen::Upper>().solve(s.E.transpose()).transpose();
  GaussianRegimeParams p;
  p.alpha = s.a;
  p.Sigma = s.B * s.B.transpose();
  p.Delta = s.D + K;
  p.gamma = s.c - K * s.a;
  p.Pi = s.F * s.F.transpose();
  p.gamma_t = s.c;
  p.Delta_t = s.D;
  p.Pi_t = s.E * s.E.transpose() + p.Pi;
  return p;
}

struct ConstraintReport {
  double mean_residual = 0.0;        // |(gamma_t - gamma) + (Delta_t - Delta) alpha|_inf
  double covariance_residual = 0.0;  // |(Delta_t - Delta) Sigma (Delta_t - Delta)^T + Pi - Pi_t|_inf
  double min_eig_gap = 0.0;          // smallest eigenvalue of Pi_t - Pi
  bool pass = false;
};

inline ConstraintReport check_constraints(const GaussianRegimeParams& p, double tol) {
  ConstraintReport r;
  const MatrixXd dd = p.Delta_t - p.Delta;
  r.mean_residual = ((p.gamma_t - p.gamma) + dd * p.alpha).cwiseAbs().maxCoeff();
  r.covariance_residual = (dd * p.Sigma * dd.transpose() + p.Pi - p.Pi_t).cwiseAbs().maxCoeff();
  const MatrixXd gap = p.Pi_t - p.Pi;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (gap + gap.transpose()), Eigen::EigenvaluesOnly);
  r.min_eig_gap = eig.eigenvalues().minCoeff();
  r.pass = r.mean_residual <= tol && r.covariance_residual <= tol && r.min_eig_gap >= -tol;
  return r;
}

namespace detail {

inline MatrixXd lower_cholesky(const MatrixXd& S, const char* name) {
  Eigen::LLT<MatrixXd> llt(0.5 * (S + S.transpose()));
  if (llt.info() != Eigen::Success) throw DataError(std::string(name) + " is not positive definite");
  return llt.matrixL();
}

inline double condition_number(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

inline constexpr double kMaxConditionNumber = 1e12;

}  // namespace detail

/// Inverts entailed_params on the constraint set:
///   a = alpha, B = chol(Sigma), c = gamma_t, D = Delta_t, E = (Delta - Delta_t) B, F = chol(Pi).
inline ReducedLinearSCM recover_scm(const GaussianRegimeParams& p, double tol = 1e-8) {
  const ConstraintReport r = check_constraints(p, tol);
  if (r.mean_residual > tol)
    throw DataError("recover_scm: mean relation (gamma_t - gamma) + (Delta_t - Delta) alpha = 0 violated");
  if (r.covariance_residual > tol)
    throw DataError("recover_scm: covariance relation (Delta_t - Delta) Sigma (Delta_t - Delta)^T + Pi = Pi_t violated");
  if (r.min_eig_gap < -tol) throw DataError("recover_scm: Pi_t - Pi is indefinite");
  if (detail::condition_number(p.Sigma) > detail::kMaxConditionNumber)
    throw DataError("recover_scm: Sigma is near singular");
  ReducedLinearSCM s;
  s.a = p.alpha;
  s.B = detail::lower_cholesky(p.Sigma, "Sigma");
  s.c = p.gamma_t;
  s.D = p.Delta_t;
  s.E = (p.Delta - p.Delta_t) * s.B;
  s.F = detail::lower_cholesky(p.Pi, "Pi");
  return s;
}

/// Free coordinates of (a, B, c, D, E, F).
constexpr long scm_parameter_count(long m, long n) {
  return m + m * (m + 1) / 2 + n + 2 * n * m + n * (n + 1) / 2;
}

/// Free coordinates of the unconstrained (alpha, Sigma, gamma, Delta, Pi, gamma_t, Delta_t, Pi_t).
constexpr long regime_parameter_count(long m, long n) {
  return m + m * (m + 1) / 2 + 2 * (n + n * m + n * (n + 1) / 2);
}

// ---------------------------------------------------------------------------
// Sampling

struct LinearRegimeData {
  MatrixXd x_obs;  // N_O x M
  MatrixXd y_obs;  // N_O x N
  MatrixXd x_int;  // N_I x M, assigned treatments
  MatrixXd y_int;  // N_I x N
};

namespace detail {

inline MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n01;
  MatrixXd out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = n01(rng);
  return out;
}

}  // namespace detail

/// Observational draws (rows are samples).
inline void sample_observational(const ReducedLinearSCM& s, Eigen::Index n, Rng& rng, MatrixXd& x, MatrixXd& y) {
  const MatrixXd u = detail::standard_normal(n, s.dim_x(), rng);
  const MatrixXd v = detail::standard_normal(n, s.dim_y(), rng);
  x = (u * s.B.transpose()).rowwise() + s.a.transpose();
  y = ((x * s.D.transpose() + u * s.E.transpose() + v * s.F.transpose()).rowwise() + s.c.transpose()).eval();
}

/// Draws of Y under do(X = x) for each row of x.
inline MatrixXd sample_interventional(const ReducedLinearSCM& s, const MatrixXd& x, Rng& rng) {
  const MatrixXd u = detail::standard_normal(x.rows(), s.dim_x(), rng);
  const MatrixXd v = detail::standard_normal(x.rows(), s.dim_y(), rng);
  return (x * s.D.transpose() + u * s.E.transpose() + v * s.F.transpose()).rowwise() + s.c.transpose();
}

// ---------------------------------------------------------------------------
// Constrained maximum likelihood

struct LinearFitConfig {
  int max_iterations = 10000;
  double gradient_tolerance = 1e-8;  // on the per-sample log-likelihood
};

struct LinearFit {
  ReducedLinearSCM scm;
  GaussianRegimeParams params;
  double log_likelihood = 0.0;  // total over both regimes
  int iterations = 0;
  bool converged = false;
  ConstraintReport constraints;
};

namespace detail {

// Raw second moments of the augmented design [1, x] and the response.
struct RegressionStats {
  double n = 0.0;
  MatrixXd xx;  // (M+1) x (M+1)
  MatrixXd yx;  // N x (M+1)
  MatrixXd yy;  // N x N
};

inline RegressionStats regression_stats(const MatrixXd& x, const MatrixXd& y) {
  const Eigen::Index n = x.rows();
  MatrixXd xt(n, x.cols() + 1);
  xt.col(0).setOnes();
  xt.rightCols(x.cols()) = x;
  RegressionStats s;
  s.n = static_cast<double>(n);
  s.xx = xt.transpose() * xt / s.n;
  s.yx = y.transpose() * xt / s.n;
  s.yy = y.transpose() * y / s.n;
  return s;
}

struct GaussianTerm {
  double value = 0.0;
  MatrixXd dW;  // d/dW of the summed log-likelihood, W = [mean offset, slope]
  MatrixXd dS;  // d/dS, symmetric
};

// Sum over samples of log N(y; W [1; x], S) given raw moments.
inline GaussianTerm gaussian_term(const RegressionStats& st, const MatrixXd& W, const MatrixXd& S) {
  const Eigen::Index d = S.rows();
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance lost positive definiteness");
  const MatrixXd Wt = W.transpose();
  const MatrixXd R = st.yy - W * st.yx.transpose() - st.yx * Wt + W * st.xx * Wt;
  const MatrixXd Sinv = llt.solve(MatrixXd::Identity(d, d));
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  GaussianTerm t;
  t.value = -0.5 * st.n * (logdet + (Sinv * R).trace() + static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
  t.dW = st.n * Sinv * (st.yx - W * st.xx);
  t.dS = -0.5 * st.n * (Sinv - Sinv * R * Sinv);
  return t;
}

// Unconstrained coordinates: a, strict-lower(B) with log-diagonal, c, D, E,
// strict-lower(F) with log-diagonal.
struct Packing {
  Eigen::Index m, n;
  Eigen::Index size() const { return m + m * (m + 1) / 2 + n + 2 * n * m + n * (n + 1) / 2; }

  VectorXd pack(const ReducedLinearSCM& s) const {
    VectorXd th(size());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i) th[k++] = s.a[i];
    pack_factor(s.B, th, k);
    for (Eigen::Index i = 0; i < n; ++i) th[k++] = s.c[i];
    for (Eigen::Index i = 0; i < s.D.size(); ++i) th[k++] = s.D.data()[i];
    for (Eigen::Index i = 0; i < s.E.size(); ++i) th[k++] = s.E.data()[i];
    pack_factor(s.F, th, k);
    return th;
  }

  ReducedLinearSCM unpack(const VectorXd& th) const {
    ReducedLinearSCM s{VectorXd(m), MatrixXd::Zero(m, m), VectorXd(n), MatrixXd(n, m), MatrixXd(n, m),
                       MatrixXd::Zero(n, n)};
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i) s.a[i] = th[k++];
    unpack_factor(th, k, s.B);
    for (Eigen::Index i = 0; i < n; ++i) s.c[i] = th[k++];
    for (Eigen::Index i = 0; i < s.D.size(); ++i) s.D.data()[i] = th[k++];
    for (Eigen::Index i = 0; i < s.E.size(); ++i) s.E.data()[i] = th[k++];
    unpack_factor(th, k, s.F);
    return s;
  }

  // Gradient with respect to the packed coordinates, from matrix gradients.
  VectorXd pack_gradient(const ReducedLinearSCM& s, const VectorXd& da, const MatrixXd& dB, const VectorXd& dc,
                         const MatrixXd& dD, const MatrixXd& dE, const MatrixXd& dF) const {
    VectorXd g(size());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i) g[k++] = da[i];
    pack_factor_gradient(s.B, dB, g, k);
    for (Eigen::Index i = 0; i < n; ++i) g[k++] = dc[i];
    for (Eigen::Index i = 0; i < dD.size(); ++i) g[k++] = dD.data()[i];
    for (Eigen::Index i = 0; i < dE.size(); ++i) g[k++] = dE.data()[i];
    pack_factor_gradient(s.F, dF, g, k);
    return g;
  }

 private:
  static void pack_factor(const MatrixXd& L, VectorXd& th, Eigen::Index& k) {
    for (Eigen::Index i = 0; i < L.rows(); ++i)
      for (Eigen::Index j = 0; j <= i; ++j) th[k++] = i == j ? std::log(L(i, i)) : L(i, j);
  }
  static void unpack_factor(const VectorXd& th, Eigen::Index& k, MatrixXd& L) {
    for (Eigen::Index i = 0; i < L.rows(); ++i)
      for (Eigen::Index j = 0; j <= i; ++j) L(i, j) = i == j ? std::exp(th[k++]) : th[k++];
  }
  static void pack_factor_gradient(const MatrixXd& L, const MatrixXd& dL, VectorXd& g, Eigen::Index& k) {
    for (Eigen::Index i = 0; i < L.rows(); ++i)
      for (Eigen::Index j = 0; j <= i; ++j) g[k++] = i == j ? dL(i, i) * L(i, i) : dL(i, j);
  }
};

struct Objective {
  const RegressionStats& x_marginal;  // x on the constant design only
  const RegressionStats& obs;
  const RegressionStats& intv;
  Packing packing;

  double operator()(const VectorXd& th, VectorXd* grad) const {
    const ReducedLinearSCM s = packing.unpack(th);
    const Eigen::Index m = packing.m, n = packing.n;
    const MatrixXd K = s.B.transpose().triangularView<Eigen::Upper>().solve(s.E.transpose()).transpose();
    const MatrixXd Binv_t = s.B.transpose().triangularView<Eigen::Upper>().solve(MatrixXd::Identity(m, m));

    const MatrixXd Sigma = s.B * s.B.transpose();
    const MatrixXd Pi = s.F * s.F.transpose();
    const MatrixXd Pi_t = s.E * s.E.transpose() + Pi;
    MatrixXd W_x(m, 1);
    W_x.col(0) = s.a;
    MatrixXd W_obs(n, m + 1), W_int(n, m + 1);
    W_obs.col(0) = s.c - K * s.a;
    W_obs.rightCols(m) = s.D + K;
    W_int.col(0) = s.c;
    W_int.rightCols(m) = s.D;

    const GaussianTerm tx = gaussian_term(x_marginal, W_x, Sigma);
    const GaussianTerm to = gaussian_term(obs, W_obs, Pi);
    const GaussianTerm ti = gaussian_term(intv, W_int, Pi_t);
    const double total = tx.value + to.value + ti.value;
    if (grad) {
      VectorXd da = tx.dW.col(0);
      MatrixXd dB = 2.0 * tx.dS * s.B;
      const VectorXd g_gamma = to.dW.col(0);
      const MatrixXd g_delta = to.dW.rightCols(m);
      VectorXd dc = g_gamma + ti.dW.col(0);
      MatrixXd dD = g_delta + ti.dW.rightCols(m);
      const MatrixXd dK = g_delta - g_gamma * s.a.transpose();
      da -= K.transpose() * g_gamma;
      MatrixXd dE = dK * Binv_t + 2.0 * ti.dS * s.E;
      dB -= K.transpose() * dK * Binv_t;
      const MatrixXd dF = 2.0 * (to.dS + ti.dS) * s.F;
      *grad = packing.pack_gradient(s, da, dB, dc, dD, dE, dF);
    }
    return total;
  }
};

inline void require_identifiable(const RegressionStats& st, const char* regime) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(st.xx, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  if (!(lo > hi * 1e-12))
    throw DataError(std::string("fit_constrained: ") + regime +
                    " design is rank deficient; the treatment coefficients are not identifiable");
}

// Least-squares coefficients and residual covariance from raw moments.
inline void regress(const RegressionStats& st, MatrixXd& W, MatrixXd& S) {
  W = st.xx.ldlt().solve(st.yx.transpose()).transpose();
  S = st.yy - W * st.yx.transpose();
  S = 0.5 * (S + S.transpose());
}

}  // namespace detail

/// Joint Gaussian MLE over both regimes in SCM coordinates, so the regime
/// constraints hold by construction. Quasi-Newton ascent with Armijo
/// backtracking, warm-started from per-regime regressions.
inline LinearFit fit_constrained(const LinearRegimeData& data, const LinearFitConfig& config = {}) {
  const Eigen::Index m = data.x_obs.cols(), n = data.y_obs.cols();
  if (m < 1 || n < 1) throw DataError("fit_constrained: empty dimensions");
  if (data.x_int.cols() != m || data.y_int.cols() != n || data.x_obs.rows() != data.y_obs.rows() ||
      data.x_int.rows() != data.y_int.rows())
    throw DataError("fit_constrained: inconsistent shapes");
  if (data.x_obs.rows() < m + n + 1 || data.x_int.rows() < m + n + 1)
    throw DataError("fit_constrained: each regime needs at least dim(x) + dim(y) + 1 samples");
  if (!data.x_obs.allFinite() || !data.y_obs.allFinite() || !data.x_int.allFinite() || !data.y_int.allFinite())
    throw DataError("fit_constrained: non-finite samples");

  const detail::RegressionStats x_marginal = detail::regression_stats(MatrixXd(data.x_obs.rows(), 0), data.x_obs);
  const detail::RegressionStats obs = detail::regression_stats(data.x_obs, data.y_obs);
  const detail::RegressionStats intv = detail::regression_stats(data.x_int, data.y_int);
  detail::require_identifiable(obs, "observational");
  detail::require_identifiable(intv, "interventional");

  // Warm start.
  MatrixXd Wx, Sx, Wo, So, Wi, Si;
  detail::regress(x_marginal, Wx, Sx);
  detail::regress(obs, Wo, So);
  detail::regress(intv, Wi, Si);
  if (detail::condition_number(Sx) > detail::kMaxConditionNumber)
    throw DataError("fit_constrained: observational treatment covariance is near singular");
  ReducedLinearSCM start;
  start.a = Wx.col(0);
  start.B = detail::lower_cholesky(Sx, "observational treatment covariance");
  start.c = Wi.col(0);
  start.D = Wi.rightCols(m);
  start.E = (Wo.rightCols(m) - start.D) * start.B;
  start.F = detail::lower_cholesky(So, "observational residual covariance");

  const double total_n = obs.n + intv.n;
  const detail::Objective objective{x_marginal, obs, intv, detail::Packing{m, n}};
  auto f = [&](const VectorXd& th, VectorXd* g) {
    const double v = objective(th, g);
    if (g) *g /= total_n;
    return v / total_n;
  };

  VectorXd th = objective.packing.pack(start), g;
  double value = f(th, &g);
  LinearFit fit;
  // Limited-memory quasi-Newton directions (two-loop recursion) with Armijo
  // backtracking; falls back to the plain gradient when the direction is not
  // an ascent direction.
  constexpr std::size_t kMemory = 10;
  std::vector<VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;
  int it = 0;
  for (; it < config.max_iterations; ++it) {
    if (g.cwiseAbs().maxCoeff() < config.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    // Work on the minimization of -f.
    VectorXd q = -g;
    std::vector<double> alpha_hist(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha_hist[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha_hist[k] * y_hist[k];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alpha_hist[k] - beta) * s_hist[k];
    }
    VectorXd dir = -q;
    if (dir.dot(g) <= 0.0) {
      dir = g;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(1e-12, g.cwiseAbs().maxCoeff())) : 1.0;
    VectorXd th_new, g_new;
    double value_new = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    const double slope = dir.dot(g);
    for (int attempt = 0; attempt < 60; ++attempt) {
      th_new = th + step * dir;
      try {
        value_new = f(th_new, &g_new);
      } catch (const NumericalError&) {
        value_new = -std::numeric_limits<double>::infinity();
      }
      if (std::isfinite(value_new) && value_new >= value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no ascent left at floating-point resolution
    const VectorXd sk = th_new - th, yk = -(g_new - g);
    const double sy = sk.dot(yk);
    if (sy > 1e-16 * sk.norm() * yk.norm()) {
      if (s_hist.size() == kMemory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
      s_hist.push_back(sk);
      y_hist.push_back(yk);
      rho_hist.push_back(1.0 / sy);
    }
    th = std::move(th_new);
    g = std::move(g_new);
    value = value_new;
  }
  if (!fit.converged && g.cwiseAbs().maxCoeff() < config.gradient_tolerance) fit.converged = true;
  fit.scm = objective.packing.unpack(th);
  fit.params = entailed_params(fit.scm);
  fit.log_likelihood = value * total_n;
  fit.iterations = it;
  fit.constraints = check_constraints(fit.params, 1e-8);
  return fit;
}

}  // namespace causal_reduction::linear
