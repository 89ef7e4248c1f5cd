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

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "causal_reduction/flow_estimation.hpp"

namespace {

using namespace causal_reduction;
using namespace causal_reduction::flow;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

FlowConfig small_config(Eigen::Index confounders = 0) {
  FlowConfig c;
  c.bins = 4;
  c.hidden = 8;
  c.confounders = confounders;
  return c;
}

// Zeroes every g weight and bias: g becomes the identity for all contexts.
void make_g_identity(ReducedFlowModel& m) {
  for (MatrixXd* p : m.g_parameters()) p->setZero();
}

// g ignores u when the first-layer column for u is zero.
void make_g_ignore_u(ReducedFlowModel& m) { m.g_parameters()[0]->col(1).setZero(); }

void perturb(ReducedFlowModel& m, double scale, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> n01;
  for (MatrixXd* p : m.parameters())
    for (Eigen::Index i = 0; i < p->size(); ++i) p->data()[i] += scale * n01(rng);
}

SampleBatch batch(std::vector<double> x, std::vector<double> y) {
  const auto n = static_cast<Eigen::Index>(x.size());
  return {Eigen::Map<RowVectorXd>(x.data(), n), Eigen::Map<RowVectorXd>(y.data(), n), MatrixXd(0, n)};
}

// x ~ N(0, 1), y = sin(2x) + 0.5 e; unconfounded, so p(y | do(x)) = p(y | x).
SampleBatch smooth_samples(std::size_t n, Rng& rng) {
  std::normal_distribution<double> n01;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = n01(rng);
    y[i] = std::sin(2.0 * x[i]) + 0.5 * n01(rng);
  }
  return batch(x, y);
}

// Confounded: w ~ N(0, 1), x = w + 0.5 e1, y = x + w + 0.5 e2.
SampleBatch confounded_obs(std::size_t n, Rng& rng) {
  std::normal_distribution<double> n01;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = n01(rng);
    x[i] = w + 0.5 * n01(rng);
    y[i] = x[i] + w + 0.5 * n01(rng);
  }
  return batch(x, y);
}

SampleBatch confounded_int(std::size_t n, Rng& rng) {
  std::normal_distribution<double> n01;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 1.2 * n01(rng);
    y[i] = x[i] + n01(rng) + 0.5 * n01(rng);
  }
  return batch(x, y);
}

TEST(FlowLikelihood, IdentityModelIsStandardNormalProduct) {
  auto m = ReducedFlowModel::initialize(small_config(), 1);
  make_g_identity(m);
  EXPECT_NEAR(obs_log_likelihood(m, 0.0, 0.0), -std::log(2.0 * M_PI), 1e-14);
  EXPECT_NEAR(int_log_likelihood(m, 0.4, 0.0), -0.5 * std::log(2.0 * M_PI), 1e-12);
  std::mt19937_64 rng(3);
  std::vector<double> ys;
  for (int i = 0; i < 10000; ++i) ys.push_back(sample_interventional(m, 2.0, rng));
  for (int i = 0; i < 10000; ++i) ys.push_back(sample_observational(m, -1.0, rng));
  std::normal_distribution<double> n01;
  std::vector<double> ref;
  for (int i = 0; i < 20000; ++i) ref.push_back(n01(rng));
  EXPECT_LT(ks_statistic(ys, ref), 1.628 * std::sqrt(2.0 / 20000.0));
}

TEST(FlowLikelihood, ObservationalDensityIntegratesToOne) {
  for (std::uint64_t seed : {2, 3}) {
    auto m = ReducedFlowModel::initialize(small_config(), seed);
    perturb(m, 0.3, seed + 10);
    const std::size_t n = 601;
    const auto grid = linspace(-12.0, 12.0, n);
    std::vector<double> xs, ys;
    for (double x : grid)
      for (double y : grid) {
        xs.push_back(x);
        ys.push_back(y);
      }
    const auto ll = obs_log_likelihoods(m, batch(xs, ys));
    std::vector<double> inner(n), row(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) row[j] = std::exp(ll.values[i * n + j]);
      inner[i] = trapezoid(grid, row);
    }
    const double mass = trapezoid(grid, inner);
    EXPECT_GE(mass, 0.995);
    EXPECT_LE(mass, 1.005);
    EXPECT_NEAR(mass, 1.0, 1e-3);
  }
}

TEST(FlowLikelihood, FactorizesWhenGIgnoresU) {
  auto m = ReducedFlowModel::initialize(small_config(), 4);
  perturb(m, 0.5, 40);
  make_g_ignore_u(m);
  Rng rng = make_rng(41);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 50; ++rep) {
    const double x = 2.0 * n01(rng), y = 2.0 * n01(rng);
    const auto [u, ld_f] = m.f_transform().forward(x);
    const auto [v, ld_g] = m.g_transform(x, 123.0).forward(y);  // u is irrelevant
    const double log_px = standard_normal_log_pdf(u) + ld_f;
    const double log_py_x = standard_normal_log_pdf(v) + ld_g;
    EXPECT_NEAR(obs_log_likelihood(m, x, y), log_py_x + log_px, 1e-12);
    EXPECT_NEAR(int_log_likelihood(m, x, y), log_py_x, 1e-10);
  }
}

TEST(FlowLikelihood, SamplersAgreeWhenGIgnoresU) {
  auto m = ReducedFlowModel::initialize(small_config(), 5);
  perturb(m, 0.5, 50);
  make_g_ignore_u(m);
  Rng rng = make_rng(51);
  std::vector<double> a, b;
  for (int i = 0; i < 10000; ++i) a.push_back(sample_observational(m, 0.7, rng));
  for (int i = 0; i < 10000; ++i) b.push_back(sample_interventional(m, 0.7, rng));
  EXPECT_LT(ks_statistic(a, b), 1.628 * std::sqrt(2.0 / 10000.0));
}

TEST(FlowLikelihood, InterventionalSamplesMatchDensity) {
  auto m = ReducedFlowModel::initialize(small_config(), 6);
  perturb(m, 0.1, 60);
  Rng rng = make_rng(61);
  const double x = 0.5;
  const int n = 100000, bins = 48;
  const double lo = -6.0, hi = 6.0, w = (hi - lo) / bins;
  std::vector<int> hist(bins, 0);
  int inside = 0;
  for (int i = 0; i < n; ++i) {
    const double y = sample_interventional(m, x, rng);
    if (y < lo || y >= hi) continue;
    ++hist[static_cast<std::size_t>((y - lo) / w)];
    ++inside;
  }
  ASSERT_GT(inside, n / 2);
  for (int k = 0; k < bins; ++k) {
    // Bin probability from the model density (Simpson on the bin).
    const double a = lo + k * w;
    const double p = w / 6.0 *
                     (std::exp(int_log_likelihood(m, x, a)) + 4.0 * std::exp(int_log_likelihood(m, x, a + w / 2)) +
                      std::exp(int_log_likelihood(m, x, a + w)));
    const double expected = n * p;
    const double sd = std::sqrt(std::max(expected, 1.0));
    EXPECT_LT(std::abs(hist[static_cast<std::size_t>(k)] - expected), 5.0 * sd + 0.01 * expected) << "bin " << k;
  }
}

TEST(FlowLikelihood, UnderflowIsFlooredAndFlagged) {
  auto m = ReducedFlowModel::initialize(small_config(), 7);
  make_g_identity(m);
  const auto lv = int_log_likelihoods(m, batch({0.0, 0.0}, {0.0, 40.0}));
  EXPECT_EQ(lv.floored, 1u);
  EXPECT_EQ(lv.values[1], kLogDensityFloor);
  EXPECT_GT(lv.values[0], kLogDensityFloor);
}

TEST(FlowLikelihood, ConfounderConditionalModel) {
  auto m = ReducedFlowModel::initialize(small_config(2), 8);
  perturb(m, 0.3, 80);
  SampleBatch b = batch({0.1, -0.4}, {0.3, 1.2});
  b.c = MatrixXd(2, 2);
  b.c << 0.5, -1.0, 2.0, 0.0;
  const auto lv = obs_log_likelihoods(m, b);
  for (Eigen::Index i = 0; i < 2; ++i) {
    const VectorXd c = b.c.col(i);
    const auto [u, ld_f] = m.f_transform(c).forward(b.x[i]);
    const auto [v, ld_g] = m.g_transform(b.x[i], u, c).forward(b.y[i]);
    EXPECT_NEAR(lv.values[static_cast<std::size_t>(i)],
                standard_normal_log_pdf(u) + ld_f + standard_normal_log_pdf(v) + ld_g, 1e-12);
  }
  EXPECT_THROW(obs_log_likelihood(m, 0.0, 0.0), DataError);
}

TEST(FlowGrid, WeightsAreNormalized) {
  IntegrationGrid g;
  const RowVectorXd lw = g.log_weights();
  EXPECT_EQ(lw.size(), 101);
  EXPECT_NEAR(lw.array().exp().sum(), 1.0, 1e-14);
  g.points = 1;
  EXPECT_THROW(g.nodes(), UsageError);
}

TEST(JointLoss, SingleSampleIsSumOfTerms) {
  auto m = ReducedFlowModel::initialize(small_config(), 9);
  perturb(m, 0.3, 90);
  const JointLoss l = joint_loss(m, batch({0.2}, {-0.3}), batch({1.0}, {0.5}));
  EXPECT_NEAR(l.value, -obs_log_likelihood(m, 0.2, -0.3) - int_log_likelihood(m, 1.0, 0.5), 1e-12);
  EXPECT_FALSE(l.single_regime);
}

TEST(JointLoss, MeanWeightingAndNaiveSums) {
  auto m = ReducedFlowModel::initialize(small_config(), 10);
  perturb(m, 0.3, 100);
  Rng rng = make_rng(101);
  const SampleBatch obs = confounded_obs(30, rng), intv = confounded_int(20, rng);
  const JointLoss l = joint_loss(m, obs, intv);
  double so = 0.0, si = 0.0;
  for (Eigen::Index i = 0; i < obs.size(); ++i) so -= obs_log_likelihood(m, obs.x[i], obs.y[i]);
  for (Eigen::Index i = 0; i < intv.size(); ++i) si -= int_log_likelihood(m, intv.x[i], intv.y[i]);
  EXPECT_NEAR(l.value, so / 30.0 + si / 20.0, 1e-12);

  SampleBatch dup{RowVectorXd(60), RowVectorXd(60), MatrixXd(0, 60)};
  dup.x << obs.x, obs.x;
  dup.y << obs.y, obs.y;
  EXPECT_NEAR(joint_loss(m, dup, intv).value, l.value, 1e-12);
}

TEST(JointLoss, EmptyRegimeDegradesWithFlag) {
  auto m = ReducedFlowModel::initialize(small_config(), 11);
  const JointLoss l = joint_loss(m, batch({0.1}, {0.2}), SampleBatch{});
  EXPECT_TRUE(l.single_regime);
  EXPECT_NEAR(l.value, -obs_log_likelihood(m, 0.1, 0.2), 1e-12);
  EXPECT_THROW(joint_loss(m, SampleBatch{}, SampleBatch{}), DataError);
}

// Central differences of the full loss over every parameter entry.
double full_loss_gradient_error(ReducedFlowModel m, const SampleBatch& obs, const SampleBatch& intv) {
  const IntegrationGrid grid;
  const LossGradient go = obs_loss_gradient(m, obs);
  const LossGradient gi = int_loss_gradient(m, intv, grid);
  double worst = 0.0;
  auto params = m.parameters();
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (Eigen::Index i = 0; i < params[b]->size(); ++i) {
      double& p = params[b]->data()[i];
      const double saved = p, h = 1e-6;
      p = saved + h;
      const double up = joint_loss(m, obs, intv, grid).value;
      p = saved - h;
      const double down = joint_loss(m, obs, intv, grid).value;
      p = saved;
      const double fd = (up - down) / (2 * h);
      const double an = go.gradients[b].data()[i] + gi.gradients[b].data()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-2, std::abs(fd)));
    }
  }
  return worst;
}

TEST(FlowGradient, FullLossMatchesFiniteDifferences) {
  auto m = ReducedFlowModel::initialize(small_config(), 12);
  perturb(m, 0.2, 120);
  Rng rng = make_rng(121);
  EXPECT_LT(full_loss_gradient_error(m, confounded_obs(20, rng), confounded_int(10, rng)), 1e-4);
}

TEST(FlowGradient, ConditionalFMatchesFiniteDifferences) {
  auto m = ReducedFlowModel::initialize(small_config(1), 13);
  perturb(m, 0.2, 130);
  Rng rng = make_rng(131);
  SampleBatch obs = confounded_obs(12, rng), intv = confounded_int(6, rng);
  std::normal_distribution<double> n01;
  obs.c = MatrixXd(1, 12);
  intv.c = MatrixXd(1, 6);
  for (Eigen::Index i = 0; i < 12; ++i) obs.c(0, i) = n01(rng);
  for (Eigen::Index i = 0; i < 6; ++i) intv.c(0, i) = n01(rng);
  EXPECT_LT(full_loss_gradient_error(m, obs, intv), 1e-4);
}

TEST(FlowGradient, InterventionalLossLeavesFUntouched) {
  auto m = ReducedFlowModel::initialize(small_config(), 14);
  Rng rng = make_rng(141);
  const LossGradient g = int_loss_gradient(m, confounded_int(5, rng), IntegrationGrid{});
  EXPECT_EQ(g.gradients[0].cwiseAbs().maxCoeff(), 0.0);
  double g_norm = 0.0;
  for (std::size_t b = 1; b < g.gradients.size(); ++b) g_norm += g.gradients[b].squaredNorm();
  EXPECT_GT(g_norm, 0.0);
}

TrainConfig fast_train_config(std::uint64_t seed) {
  TrainConfig tc;
  tc.flow.bins = 8;
  tc.flow.hidden = 16;
  tc.learning_rate = 1e-2;
  tc.max_epochs = 300;
  tc.patience = 60;
  tc.grid.points = 21;
  tc.seed = seed;
  return tc;
}

TEST(FlowTraining, DeterministicGivenSeed) {
  Rng rng = make_rng(150);
  TrainingData d{confounded_obs(100, rng), confounded_obs(100, rng), confounded_int(30, rng),
                 confounded_int(30, rng)};
  TrainConfig tc = fast_train_config(7);
  tc.max_epochs = 40;
  const TrainResult a = train(d, tc, TrainMode::Joint), b = train(d, tc, TrainMode::Joint);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].validation_loss, b.history[i].validation_loss);
  }
  const auto pa = a.model.parameters(), pb = b.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i], *pb[i]);
  EXPECT_FALSE(a.diverged);
}

TEST(FlowTraining, ReturnsBestValidationCheckpoint) {
  Rng rng = make_rng(160);
  TrainingData d{confounded_obs(50, rng), confounded_obs(50, rng), {}, {}};
  TrainConfig tc = fast_train_config(8);
  tc.max_epochs = 80;
  tc.patience = 5;
  const TrainResult r = train(d, tc, TrainMode::ObservationalOnly);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : r.history) best = std::min(best, e.validation_loss);
  EXPECT_LE(r.best_validation_loss, best);
  EXPECT_NEAR(obs_loss_gradient(r.model, d.obs_val, false).loss, r.best_validation_loss, 1e-12);
  if (r.early_stopped) {
    EXPECT_EQ(static_cast<int>(r.history.size()) - r.best_epoch, tc.patience);
  }
}

TEST(FlowTraining, RejectsMissingRegimes) {
  Rng rng = make_rng(170);
  TrainingData d{confounded_obs(10, rng), confounded_obs(10, rng), {}, {}};
  EXPECT_THROW(train(d, fast_train_config(1), TrainMode::Joint), DataError);
  EXPECT_NO_THROW(train(d, [] {
    TrainConfig tc = fast_train_config(1);
    tc.max_epochs = 1;
    return tc;
  }(), TrainMode::ObservationalOnly));
}

// Differential entropy of the smooth generator: H(x) + H(y | x).
double smooth_entropy() { return 0.5 * std::log(2 * M_PI * M_E) + 0.5 * std::log(2 * M_PI * M_E * 0.25); }
double smooth_conditional_entropy() { return 0.5 * std::log(2 * M_PI * M_E * 0.25); }

TEST(FlowTraining, ObservationalFitApproachesGeneratorEntropy) {
  Rng rng = make_rng(180);
  TrainingData d{smooth_samples(1000, rng), smooth_samples(1000, rng), {}, {}};
  TrainConfig tc = fast_train_config(9);
  tc.max_epochs = 1500;
  tc.patience = 150;
  const TrainResult r = train(d, tc, TrainMode::ObservationalOnly);
  const EvaluationReport e = evaluate(r.model, smooth_samples(20000, rng), SampleBatch{});
  EXPECT_LT(std::abs(e.obs_nll - smooth_entropy()), 0.1) << "test NLL " << e.obs_nll;
}

TEST(FlowTraining, InterventionalFitOnUnconfoundedData) {
  Rng rng = make_rng(190);
  TrainingData d{{}, {}, smooth_samples(1000, rng), smooth_samples(1000, rng)};
  TrainConfig tc = fast_train_config(10);
  tc.max_epochs = 600;
  tc.patience = 100;
  const TrainResult r = train(d, tc, TrainMode::InterventionalOnly);
  const EvaluationReport e = evaluate(r.model, SampleBatch{}, smooth_samples(5000, rng));
  EXPECT_LT(std::abs(e.int_nll - smooth_conditional_entropy()), 0.1) << "test NLL " << e.int_nll;
}

// The integrand is only piecewise smooth in u (knot crossings, rectifier
// switches), so the trapezoid rule converges at second order. The absolute
// 101-point accuracy is reported by the acceptance run.
TEST(FlowTraining, QuadratureConvergesOnTrainedModel) {
  Rng rng = make_rng(200);
  TrainingData d{confounded_obs(300, rng), confounded_obs(300, rng), confounded_int(60, rng),
                 confounded_int(60, rng)};
  TrainConfig tc = fast_train_config(11);
  tc.max_epochs = 200;
  const TrainResult r = train(d, tc, TrainMode::Joint);
  const SampleBatch test = confounded_int(200, rng);
  IntegrationGrid mid, fine, finest;
  mid.points = 201;
  fine.points = 2001;
  finest.points = 20001;
  const auto a = int_log_likelihoods(r.model, test), b = int_log_likelihoods(r.model, test, mid);
  const auto c = int_log_likelihoods(r.model, test, fine), ref = int_log_likelihoods(r.model, test, finest);
  double ea = 0.0, eb = 0.0, ec = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    ea = std::max(ea, std::abs(a.values[i] - ref.values[i]));
    eb = std::max(eb, std::abs(b.values[i] - ref.values[i]));
    ec = std::max(ec, std::abs(c.values[i] - ref.values[i]));
  }
  EXPECT_LT(ea, 1e-2);
  EXPECT_GT(ea / eb, 3.0);   // halving h gives ~4x
  EXPECT_GT(ea / ec, 100.0);  // h / 20 gives ~400x
}

TEST(FlowEvaluation, ShardMeansCombine) {
  auto m = ReducedFlowModel::initialize(small_config(), 15);
  perturb(m, 0.3, 150);
  Rng rng = make_rng(151);
  const SampleBatch a = confounded_int(7, rng), b = confounded_int(13, rng);
  SampleBatch ab{RowVectorXd(20), RowVectorXd(20), MatrixXd(0, 20)};
  ab.x << a.x, b.x;
  ab.y << a.y, b.y;
  const double ea = evaluate(m, SampleBatch{}, a).int_nll, eb = evaluate(m, SampleBatch{}, b).int_nll;
  EXPECT_NEAR(evaluate(m, SampleBatch{}, ab).int_nll, (7 * ea + 13 * eb) / 20.0, 1e-12);
  EXPECT_EQ(evaluate(m, SampleBatch{}, ab).int_nll, evaluate(m, SampleBatch{}, ab).int_nll);
  EXPECT_THROW(evaluate(m, SampleBatch{}, SampleBatch{}), DataError);
}

TEST(RatioBenchmark, InterpolationStaysInsideBracket) {
  EXPECT_DOUBLE_EQ(interpolate_log_n(100, 2.0, 250, 1.0, 2.0), 100.0);
  EXPECT_DOUBLE_EQ(interpolate_log_n(100, 2.0, 250, 1.0, 1.0), 250.0);
  EXPECT_NEAR(interpolate_log_n(100, 2.0, 400, 1.0, 1.5), 200.0, 1e-9);
  Rng rng = make_rng(210);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const double hi_nll = u(rng), lo_nll = hi_nll + u(rng), target = hi_nll + (lo_nll - hi_nll) * u(rng);
    const double n = interpolate_log_n(50, lo_nll, 100, hi_nll, target);
    EXPECT_GE(n, 50.0);
    EXPECT_LE(n, 100.0);
  }
}

}  // namespace
