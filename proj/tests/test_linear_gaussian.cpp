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

#include <gtest/gtest.h>

#include "causal_reduction/linear_gaussian.hpp"

namespace {

using namespace causal_reduction;
using namespace causal_reduction::linear;

MatrixXd random_lower(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> n01;
  MatrixXd L = MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) L(i, j) = i == j ? std::exp(0.4 * n01(rng)) : n01(rng);
  return L;
}

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> n01;
  MatrixXd A(r, c);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = n01(rng);
  return A;
}

ReducedLinearSCM random_scm(Eigen::Index m, Eigen::Index n, Rng& rng) {
  return {random_matrix(m, 1, rng).col(0), random_lower(m, rng), random_matrix(n, 1, rng).col(0),
          random_matrix(n, m, rng), random_matrix(n, m, rng), random_lower(n, rng)};
}

ReducedLinearSCM scalar_scm(double a, double b, double c, double d, double e, double f) {
  return {VectorXd::Constant(1, a), MatrixXd::Constant(1, 1, b), VectorXd::Constant(1, c),
          MatrixXd::Constant(1, 1, d), MatrixXd::Constant(1, 1, e), MatrixXd::Constant(1, 1, f)};
}

TEST(Entailed, ScalarExample) {
  const GaussianRegimeParams p = entailed_params(scalar_scm(0, 1, 0, 2, 1, 1));
  EXPECT_DOUBLE_EQ(p.alpha[0], 0.0);
  EXPECT_DOUBLE_EQ(p.Sigma(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p.Delta(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(p.gamma[0], 0.0);
  EXPECT_DOUBLE_EQ(p.Pi(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p.gamma_t[0], 0.0);
  EXPECT_DOUBLE_EQ(p.Delta_t(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(p.Pi_t(0, 0), 2.0);
}

TEST(Entailed, HandComputedConditional) {
  // Independent oracle: p(y|x) from the joint covariance of (X, Y).
  // X = 1 + 2U, Y = -1 + 0.5 X + 3U + V: Cov(X,Y) = 2*0.5*2 + 2*3 = 8, Var X = 4.
  const GaussianRegimeParams p = entailed_params(scalar_scm(1, 2, -1, 0.5, 3, 1));
  const double var_x = 4, cov = 8, var_y = 0.25 * 4 + 9 + 1 + 2 * 0.5 * 2 * 3;
  EXPECT_NEAR(p.Delta(0, 0), cov / var_x, 1e-15);
  EXPECT_NEAR(p.Pi(0, 0), var_y - cov * cov / var_x, 1e-14);
  const double mean_y = -1 + 0.5;
  EXPECT_NEAR(p.gamma[0], mean_y - cov / var_x * 1.0, 1e-15);
}

TEST(Entailed, NoConfoundingRegimesCoincide) {
  Rng rng = make_rng(1);
  ReducedLinearSCM s = random_scm(2, 3, rng);
  s.E.setZero();
  const GaussianRegimeParams p = entailed_params(s);
  EXPECT_LE((p.Delta - p.Delta_t).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((p.gamma - p.gamma_t).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((p.Pi - p.Pi_t).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(recover_scm(p).E.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Entailed, SingularBRejected) {
  EXPECT_THROW(entailed_params(scalar_scm(0, 0, 0, 1, 1, 1)), DataError);
  ReducedLinearSCM s = scalar_scm(0, 1, 0, 1, 1, 1);
  s.F(0, 0) = -1;
  EXPECT_THROW(entailed_params(s), DataError);
}

TEST(Constraints, PropertyOverRandomScms) {
  Rng rng = make_rng(2);
  std::uniform_int_distribution<int> dim(1, 3);
  for (int i = 0; i < 1000; ++i) {
    const ReducedLinearSCM s = random_scm(dim(rng), dim(rng), rng);
    const GaussianRegimeParams p = entailed_params(s);
    const ConstraintReport r = check_constraints(p, 1e-10);
    ASSERT_TRUE(r.pass) << r.mean_residual << " " << r.covariance_residual << " " << r.min_eig_gap;
    ASSERT_GE(r.min_eig_gap, -1e-12);
    const ReducedLinearSCM back = recover_scm(p);
    const GaussianRegimeParams q = entailed_params(back);
    const double err = std::max({(q.Sigma - p.Sigma).cwiseAbs().maxCoeff(), (q.Delta - p.Delta).cwiseAbs().maxCoeff(),
                                 (q.gamma - p.gamma).cwiseAbs().maxCoeff(), (q.Pi_t - p.Pi_t).cwiseAbs().maxCoeff(),
                                 (q.Pi - p.Pi).cwiseAbs().maxCoeff()});
    ASSERT_LE(err, 1e-10);
    // The SCM itself is recovered: Cholesky factors with positive diagonal are unique.
    ASSERT_LE((back.B - s.B).cwiseAbs().maxCoeff(), 1e-9);
    ASSERT_LE((back.E - s.E).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Constraints, PerturbationResidual) {
  Rng rng = make_rng(3);
  GaussianRegimeParams p = entailed_params(random_scm(2, 2, rng));
  p.Pi_t += 0.1 * MatrixXd::Identity(2, 2);
  const ConstraintReport r = check_constraints(p, 1e-10);
  EXPECT_NEAR(r.covariance_residual, 0.1, 1e-12);
  EXPECT_FALSE(r.pass);
  EXPECT_THROW(recover_scm(p), DataError);

  GaussianRegimeParams q = entailed_params(random_scm(2, 2, rng));
  q.gamma_t[0] += 0.5;
  EXPECT_NEAR(check_constraints(q, 1e-10).mean_residual, 0.5, 1e-12);
}

TEST(Constraints, TrivialEqualRegimes) {
  GaussianRegimeParams p{VectorXd::Zero(1), MatrixXd::Identity(1, 1), VectorXd::Ones(1), MatrixXd::Ones(1, 1),
                         MatrixXd::Identity(1, 1), VectorXd::Ones(1), MatrixXd::Ones(1, 1), MatrixXd::Identity(1, 1)};
  const ConstraintReport r = check_constraints(p, 0.0);
  EXPECT_EQ(r.mean_residual, 0.0);
  EXPECT_EQ(r.covariance_residual, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(ParameterCount, GapIsIndependentOfTreatmentDimension) {
  for (long m = 1; m <= 6; ++m)
    for (long n = 1; n <= 6; ++n) EXPECT_EQ(regime_parameter_count(m, n) - scm_parameter_count(m, n), n * (n + 3) / 2);
  // Packed coordinates agree with the analytic count.
  EXPECT_EQ((detail::Packing{3, 2}.size()), scm_parameter_count(3, 2));
}

TEST(Fit, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(4);
  const ReducedLinearSCM truth = random_scm(2, 2, rng);
  LinearRegimeData d;
  sample_observational(truth, 200, rng, d.x_obs, d.y_obs);
  d.x_int = detail::standard_normal(150, 2, rng);
  d.y_int = sample_interventional(truth, d.x_int, rng);
  const auto xm = detail::regression_stats(MatrixXd(200, 0), d.x_obs);
  const auto so = detail::regression_stats(d.x_obs, d.y_obs);
  const auto si = detail::regression_stats(d.x_int, d.y_int);
  const detail::Objective obj{xm, so, si, detail::Packing{2, 2}};
  const VectorXd th = obj.packing.pack(random_scm(2, 2, rng));
  VectorXd g;
  obj(th, &g);
  for (Eigen::Index i = 0; i < th.size(); ++i) {
    VectorXd hi = th, lo = th;
    const double h = 1e-6;
    hi[i] += h;
    lo[i] -= h;
    const double fd = (obj(hi, nullptr) - obj(lo, nullptr)) / (2 * h);
    EXPECT_NEAR(g[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "coordinate " << i;
  }
}

TEST(Fit, RecoversGeneratorAtLargeSamples) {
  Rng rng = make_rng(5);
  const ReducedLinearSCM truth = scalar_scm(0.5, 1.2, -0.3, 0.8, 1.5, 0.7);
  LinearRegimeData d;
  sample_observational(truth, 100000, rng, d.x_obs, d.y_obs);
  d.x_int = detail::standard_normal(100000, 1, rng);
  d.y_int = sample_interventional(truth, d.x_int, rng);
  const LinearFit fit = fit_constrained(d);
  EXPECT_TRUE(fit.converged);
  EXPECT_TRUE(fit.constraints.pass);
  EXPECT_NEAR(fit.params.Delta_t(0, 0), 0.8, 0.02);
  EXPECT_NEAR(fit.scm.E(0, 0), 1.5, 0.05);
}

TEST(Fit, MultivariateConstraintsHold) {
  Rng rng = make_rng(6);
  const ReducedLinearSCM truth = random_scm(2, 3, rng);
  LinearRegimeData d;
  sample_observational(truth, 5000, rng, d.x_obs, d.y_obs);
  d.x_int = detail::standard_normal(5000, 2, rng);
  d.y_int = sample_interventional(truth, d.x_int, rng);
  const LinearFit fit = fit_constrained(d);
  EXPECT_TRUE(fit.converged) << fit.iterations;
  EXPECT_TRUE(fit.constraints.pass);
  EXPECT_LE((fit.params.Delta_t - truth.D).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Fit, UnconfoundedGeneratorGivesEqualSlopes) {
  Rng rng = make_rng(7);
  const ReducedLinearSCM truth = scalar_scm(0, 1, 0.2, -0.6, 0, 0.5);
  LinearRegimeData d;
  sample_observational(truth, 20000, rng, d.x_obs, d.y_obs);
  d.x_int = detail::standard_normal(20000, 1, rng);
  d.y_int = sample_interventional(truth, d.x_int, rng);
  const LinearFit fit = fit_constrained(d);
  EXPECT_NEAR(fit.params.Delta(0, 0), fit.params.Delta_t(0, 0), 0.02);
}

TEST(Fit, ConstantInterventionalTreatmentRejected) {
  Rng rng = make_rng(8);
  const ReducedLinearSCM truth = scalar_scm(0, 1, 0, 1, 1, 1);
  LinearRegimeData d;
  sample_observational(truth, 100, rng, d.x_obs, d.y_obs);
  d.x_int = MatrixXd::Constant(100, 1, 0.5);
  d.y_int = sample_interventional(truth, d.x_int, rng);
  try {
    fit_constrained(d);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("identifiable"), std::string::npos);
  }
}

}  // namespace
