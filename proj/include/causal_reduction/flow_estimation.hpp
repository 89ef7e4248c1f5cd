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
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "causal_reduction/autodiff.hpp"
#include "causal_reduction/conditioner.hpp"
#include "causal_reduction/dataset.hpp"
#include "causal_reduction/errors.hpp"
#include "causal_reduction/numeric.hpp"
#include "causal_reduction/parallel.hpp"
#include "causal_reduction/random.hpp"
#include "causal_reduction/spline.hpp"

/// Reduced-model flow estimator: u = f(x) (optionally f_c), v = g_{x,u[,c]}(y)
/// with standard normal U and V, fitted on observational and interventional
/// samples.
namespace causal_reduction::flow {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

struct FlowConfig {
  Eigen::Index bins = 32;
  double bound = 6.0;
  Eigen::Index hidden = 64;
  int hidden_layers = 2;
  Eigen::Index confounders = 0;  // L, dimension of the observed confounder c
};

/// Trapezoid rule for the latent u with the standard normal weight folded
/// in. Weights are renormalized to sum to one over the grid, so a
/// u-independent integrand is reproduced exactly.
struct IntegrationGrid {
  double lo = -6.0;
  double hi = 6.0;
  Eigen::Index points = 101;

  RowVectorXd nodes() const {
    if (points < 2 || !(hi > lo)) throw UsageError("integration grid needs >= 2 points on a nonempty interval");
    const auto v = linspace(lo, hi, static_cast<std::size_t>(points));
    return Eigen::Map<const RowVectorXd>(v.data(), points);
  }

  RowVectorXd log_weights() const {
    const RowVectorXd u = nodes();
    const std::vector<double> uv(u.data(), u.data() + u.size());
    const auto w = trapezoid_weights(uv);
    RowVectorXd lw(points);
    for (Eigen::Index j = 0; j < points; ++j) lw[j] = std::log(w[static_cast<std::size_t>(j)]) + standard_normal_log_pdf(u[j]);
    const double norm = log_sum_exp(std::span<const double>(lw.data(), static_cast<std::size_t>(lw.size())));
    return (lw.array() - norm).matrix();
  }
};

class ReducedFlowModel {
 public:
  ReducedFlowModel() = default;

  static ReducedFlowModel initialize(const FlowConfig& cfg, std::uint64_t seed) {
    if (cfg.bins < 1 || !(cfg.bound > 0.0) || cfg.hidden < 1 || cfg.confounders < 0)
      throw UsageError("invalid flow configuration");
    ReducedFlowModel m;
    m.config_ = cfg;
    m.seed_ = seed;
    Rng rng = make_rng(seed);
    const Eigen::Index p = raw_size(cfg.bins);
    if (cfg.confounders == 0) {
      m.f_raw_ = MatrixXd::Zero(p, 1);
    } else {
      m.f_net_ = Mlp::init(cfg.confounders, cfg.hidden, cfg.hidden_layers, p, rng);
    }
    m.g_net_ = Mlp::init(2 + cfg.confounders, cfg.hidden, cfg.hidden_layers, p, rng);
    return m;
  }

  const FlowConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  bool conditional_f() const { return config_.confounders > 0; }

  /// Parameter blocks: f first (f_raw, or f_net W/b pairs), then g_net W/b pairs.
  std::vector<MatrixXd*> f_parameters() {
    std::vector<MatrixXd*> out;
    if (conditional_f()) {
      for (std::size_t l = 0; l < f_net_.layers(); ++l) {
        out.push_back(&f_net_.weights[l]);
        out.push_back(&f_net_.biases[l]);
      }
    } else {
      out.push_back(&f_raw_);
    }
    return out;
  }
  std::vector<MatrixXd*> g_parameters() {
    std::vector<MatrixXd*> out;
    for (std::size_t l = 0; l < g_net_.layers(); ++l) {
      out.push_back(&g_net_.weights[l]);
      out.push_back(&g_net_.biases[l]);
    }
    return out;
  }
  std::vector<MatrixXd*> parameters() {
    auto out = f_parameters();
    for (MatrixXd* p : g_parameters()) out.push_back(p);
    return out;
  }
  std::vector<const MatrixXd*> parameters() const {
    std::vector<const MatrixXd*> out;
    for (MatrixXd* p : const_cast<ReducedFlowModel*>(this)->parameters()) out.push_back(p);
    return out;
  }
  std::size_t num_f_blocks() const { return conditional_f() ? 2 * f_net_.layers() : 1; }

  const Mlp& g_net() const { return g_net_; }
  const Mlp& f_net() const { return f_net_; }
  const MatrixXd& f_raw() const { return f_raw_; }

  /// Explicit transforms for a single context.
  SplineTransform f_transform(const Eigen::VectorXd& c = {}) const {
    if (!conditional_f()) return SplineTransform::from_raw(f_raw_.col(0), config_.bins, config_.bound);
    check_c(c);
    return SplineTransform::from_raw(Eigen::VectorXd(f_net_.apply(c).col(0)), config_.bins, config_.bound);
  }
  SplineTransform g_transform(double x, double u, const Eigen::VectorXd& c = {}) const {
    check_c(c);
    Eigen::VectorXd ctx(2 + config_.confounders);
    ctx[0] = x;
    ctx[1] = u;
    if (config_.confounders) ctx.tail(config_.confounders) = c;
    return SplineTransform::from_raw(Eigen::VectorXd(g_net_.apply(ctx).col(0)), config_.bins, config_.bound);
  }

  /// Replaces all parameters (used by checkpoint loading).
  void set_parameters(const std::vector<MatrixXd>& blocks) {
    auto ps = parameters();
    if (blocks.size() != ps.size()) throw DataError("checkpoint has the wrong number of parameter blocks");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (blocks[i].rows() != ps[i]->rows() || blocks[i].cols() != ps[i]->cols())
        throw DataError("checkpoint parameter block " + std::to_string(i) + " has the wrong shape");
      *ps[i] = blocks[i];
    }
  }

 private:
  void check_c(const Eigen::VectorXd& c) const {
    if (c.size() != config_.confounders) throw DataError("confounder vector has the wrong dimension");
  }

  FlowConfig config_;
  std::uint64_t seed_ = 0;
  MatrixXd f_raw_;
  Mlp f_net_;
  Mlp g_net_;
};

// ---------------------------------------------------------------------------
// Likelihood graphs

namespace detail {

struct ParamVars {
  std::vector<ad::Var> f;  // f_raw, or f_net (W, b) pairs
  std::vector<ad::Var> g;
};

inline ParamVars bind(ad::Tape& tape, const ReducedFlowModel& m, bool grad_f, bool grad_g) {
  ParamVars pv;
  const auto ps = m.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const bool is_f = i < m.num_f_blocks();
    const bool want = is_f ? grad_f : grad_g;
    ad::Var v = want ? tape.parameter(*ps[i], "parameter") : tape.constant(*ps[i], "parameter");
    (is_f ? pv.f : pv.g).push_back(v);
  }
  return pv;
}

// 1 x n rows: u = f(x) and log f'(x).
inline std::pair<ad::Var, ad::Var> apply_f(ad::Tape& tape, const ReducedFlowModel& m, const ParamVars& pv,
                                           ad::Var x, const MatrixXd& c) {
  const FlowConfig& cfg = m.config();
  ad::Var raw = m.conditional_f() ? m.f_net().apply(tape.constant(c, "c"), pv.f) : pv.f[0];
  ad::Var out = spline_forward(raw, x, cfg.bins, cfg.bound);
  return {ad::rows(out, 0, 1), ad::rows(out, 1, 1)};
}

inline std::pair<ad::Var, ad::Var> apply_g(const ReducedFlowModel& m, const ParamVars& pv, ad::Var context,
                                           ad::Var y) {
  const FlowConfig& cfg = m.config();
  ad::Var raw = m.g_net().apply(context, pv.g);
  ad::Var out = spline_forward(raw, y, cfg.bins, cfg.bound);
  return {ad::rows(out, 0, 1), ad::rows(out, 1, 1)};
}

}  // namespace detail

/// Samples are columns; c may have zero rows.
struct SampleBatch {
  RowVectorXd x, y;
  MatrixXd c;
  Eigen::Index size() const { return x.size(); }

  static SampleBatch from(const RegimeSamples& s) { return {s.x, s.y, s.c}; }
  SampleBatch slice(Eigen::Index start, Eigen::Index count) const {
    return {x.segment(start, count), y.segment(start, count), c.middleCols(start, count)};
  }
};

/// Per-sample log p(x, y) node (1 x n), before flooring.
namespace detail {

inline void check_batch(const ReducedFlowModel& m, const SampleBatch& b) {
  if (b.y.size() != b.x.size() || b.c.cols() != b.x.size()) throw DataError("sample batch has inconsistent sizes");
  if (b.c.rows() != m.config().confounders) throw DataError("confounder dimension does not match the model");
  if (!b.x.allFinite() || !b.y.allFinite() || !b.c.allFinite()) throw DataError("non-finite sample values");
}

}  // namespace detail

inline ad::Var obs_log_likelihood_node(ad::Tape& tape, const ReducedFlowModel& m, const detail::ParamVars& pv,
                                       const SampleBatch& b) {
  detail::check_batch(m, b);
  ad::Var x = tape.constant(b.x, "x");
  ad::Var y = tape.constant(b.y, "y");
  auto [u, ld_f] = detail::apply_f(tape, m, pv, x, b.c);
  std::vector<ad::Var> ctx{x, u};
  if (b.c.rows()) ctx.push_back(tape.constant(b.c, "c"));
  auto [v, ld_g] = detail::apply_g(m, pv, ad::concat_rows(ctx), y);
  return ad::add(ad::add(ad::normal_log_pdf(v), ld_g), ad::add(ad::normal_log_pdf(u), ld_f));
}

/// Per-sample log p(y | do(x)) node (1 x n): log-sum-exp over the grid of
/// log N(g_{x,u_j}(y)) + log g' + log weight_j.
inline ad::Var int_log_likelihood_node(ad::Tape& tape, const ReducedFlowModel& m, const detail::ParamVars& pv,
                                       const SampleBatch& b, const IntegrationGrid& grid) {
  detail::check_batch(m, b);
  const Eigen::Index n = b.size(), q = grid.points, l = b.c.rows();
  const RowVectorXd u = grid.nodes();
  MatrixXd ctx(2 + l, n * q);
  RowVectorXd y(n * q);
  for (Eigen::Index i = 0; i < n; ++i) {
    ctx.row(0).segment(i * q, q).setConstant(b.x[i]);
    ctx.row(1).segment(i * q, q) = u;
    for (Eigen::Index r = 0; r < l; ++r) ctx.row(2 + r).segment(i * q, q).setConstant(b.c(r, i));
    y.segment(i * q, q).setConstant(b.y[i]);
  }
  auto [v, ld_g] = detail::apply_g(m, pv, tape.constant(std::move(ctx), "context"), tape.constant(std::move(y), "y"));
  ad::Var terms = ad::add_group_constant(ad::add(ad::normal_log_pdf(v), ld_g), grid.log_weights());
  return ad::group_logsumexp(terms, q);
}

struct LikelihoodValues {
  std::vector<double> values;  // floored at kLogDensityFloor
  std::size_t floored = 0;
};

namespace detail {

inline Eigen::Index chunk_samples(Eigen::Index columns_per_sample) {
  constexpr Eigen::Index kColumnsPerChunk = 16384;
  return std::max<Eigen::Index>(1, kColumnsPerChunk / std::max<Eigen::Index>(1, columns_per_sample));
}

template <typename Node>
LikelihoodValues evaluate_chunked(const ReducedFlowModel& m, const SampleBatch& b, Eigen::Index per_sample,
                                  Node node) {
  LikelihoodValues out;
  out.values.reserve(static_cast<std::size_t>(b.size()));
  const Eigen::Index chunk = chunk_samples(per_sample);
  for (Eigen::Index s = 0; s < b.size(); s += chunk) {
    const Eigen::Index cnt = std::min(chunk, b.size() - s);
    ad::Tape tape;
    const ParamVars pv = bind(tape, m, false, false);
    const MatrixXd& v = node(tape, pv, b.slice(s, cnt)).value();
    for (Eigen::Index i = 0; i < cnt; ++i) {
      double ll = v(0, i);
      if (ll < kLogDensityFloor) {
        ll = kLogDensityFloor;
        ++out.floored;
      }
      out.values.push_back(ll);
    }
  }
  return out;
}

}  // namespace detail

inline LikelihoodValues obs_log_likelihoods(const ReducedFlowModel& m, const SampleBatch& b) {
  return detail::evaluate_chunked(m, b, 1, [&](ad::Tape& t, const detail::ParamVars& pv, const SampleBatch& s) {
    return obs_log_likelihood_node(t, m, pv, s);
  });
}

inline LikelihoodValues int_log_likelihoods(const ReducedFlowModel& m, const SampleBatch& b,
                                            const IntegrationGrid& grid = {}) {
  return detail::evaluate_chunked(m, b, grid.points,
                                  [&](ad::Tape& t, const detail::ParamVars& pv, const SampleBatch& s) {
                                    return int_log_likelihood_node(t, m, pv, s, grid);
                                  });
}

inline SampleBatch single_sample(double x, double y, const Eigen::VectorXd& c) {
  return {RowVectorXd::Constant(1, x), RowVectorXd::Constant(1, y), MatrixXd(c)};
}

inline double obs_log_likelihood(const ReducedFlowModel& m, double x, double y, const Eigen::VectorXd& c = {}) {
  return obs_log_likelihoods(m, single_sample(x, y, c)).values[0];
}

inline double int_log_likelihood(const ReducedFlowModel& m, double x, double y, const Eigen::VectorXd& c = {},
                                 const IntegrationGrid& grid = {}) {
  return int_log_likelihoods(m, single_sample(x, y, c), grid).values[0];
}

// ---------------------------------------------------------------------------
// Losses and gradients

struct LossGradient {
  double loss = 0.0;                  // mean negative log-likelihood
  std::vector<MatrixXd> gradients;    // aligned with ReducedFlowModel::parameters()
  std::size_t floored = 0;
};

namespace detail {

template <typename Node>
LossGradient mean_nll_gradient(const ReducedFlowModel& m, const SampleBatch& b, Eigen::Index per_sample,
                               bool grad_f, bool grad_g, Node node) {
  if (b.size() == 0) throw DataError("empty regime");
  LossGradient out;
  const auto ps = m.parameters();
  for (const MatrixXd* p : ps) out.gradients.push_back(MatrixXd::Zero(p->rows(), p->cols()));
  const Eigen::Index chunk = chunk_samples(per_sample);
  const double inv_n = 1.0 / static_cast<double>(b.size());
  for (Eigen::Index s = 0; s < b.size(); s += chunk) {
    const Eigen::Index cnt = std::min(chunk, b.size() - s);
    ad::Tape tape;
    const ParamVars pv = bind(tape, m, grad_f, grad_g);
    ad::Var ll = node(tape, pv, b.slice(s, cnt));
    for (Eigen::Index i = 0; i < cnt; ++i) out.floored += ll.value()(0, i) < kLogDensityFloor;
    ad::Var loss = ad::scale(ad::sum(ad::clamp_min(ll, kLogDensityFloor)), -inv_n);
    out.loss += loss.value()(0, 0);
    if (!grad_f && !grad_g) continue;
    tape.backward(loss);
    std::size_t k = 0;
    for (ad::Var v : pv.f) out.gradients[k++] += tape.grad(v);
    for (ad::Var v : pv.g) out.gradients[k++] += tape.grad(v);
  }
  return out;
}

}  // namespace detail

inline LossGradient obs_loss_gradient(const ReducedFlowModel& m, const SampleBatch& b, bool with_grad = true) {
  return detail::mean_nll_gradient(m, b, 1, with_grad, with_grad,
                                   [&](ad::Tape& t, const detail::ParamVars& pv, const SampleBatch& s) {
                                     return obs_log_likelihood_node(t, m, pv, s);
                                   });
}

/// Interventional mean NLL; f receives no gradient (it does not enter).
inline LossGradient int_loss_gradient(const ReducedFlowModel& m, const SampleBatch& b, const IntegrationGrid& grid,
                                      bool with_grad = true) {
  return detail::mean_nll_gradient(m, b, grid.points, false, with_grad,
                                   [&](ad::Tape& t, const detail::ParamVars& pv, const SampleBatch& s) {
                                     return int_log_likelihood_node(t, m, pv, s, grid);
                                   });
}

struct JointLoss {
  double value = 0.0;
  double obs_nll = std::numeric_limits<double>::quiet_NaN();
  double int_nll = std::numeric_limits<double>::quiet_NaN();
  bool single_regime = false;  // one regime was empty
  std::size_t floored = 0;
};

/// Mean observational NLL plus mean interventional NLL.
inline JointLoss joint_loss(const ReducedFlowModel& m, const SampleBatch& obs, const SampleBatch& intv,
                            const IntegrationGrid& grid = {}) {
  if (obs.size() == 0 && intv.size() == 0) throw DataError("joint_loss: both regimes are empty");
  JointLoss out;
  if (obs.size()) {
    const auto r = obs_loss_gradient(m, obs, false);
    out.obs_nll = r.loss;
    out.value += r.loss;
    out.floored += r.floored;
  }
  if (intv.size()) {
    const auto r = int_loss_gradient(m, intv, grid, false);
    out.int_nll = r.loss;
    out.value += r.loss;
    out.floored += r.floored;
  }
  out.single_regime = obs.size() == 0 || intv.size() == 0;
  return out;
}

// ---------------------------------------------------------------------------
// Training

enum class TrainMode { ObservationalOnly, InterventionalOnly, Joint };

inline const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::ObservationalOnly:
      return "obs_only";
    case TrainMode::InterventionalOnly:
      return "int_only";
    default:
      return "joint";
  }
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_epochs = 10000;
  int patience = 1000;
  IntegrationGrid grid;
  std::uint64_t seed = 0;
  FlowConfig flow;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainResult {
  ReducedFlowModel model;  // best-validation checkpoint
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_validation_loss = std::numeric_limits<double>::infinity();
  bool diverged = false;
  bool early_stopped = false;
  std::string divergence_message;
};

struct TrainingData {
  SampleBatch obs_train, obs_val, int_train, int_val;
};

namespace detail {

class Adam {
 public:
  Adam(const std::vector<MatrixXd*>& params, const TrainConfig& cfg) : cfg_(cfg) {
    for (const MatrixXd* p : params) {
      m_.push_back(MatrixXd::Zero(p->rows(), p->cols()));
      v_.push_back(MatrixXd::Zero(p->rows(), p->cols()));
      t_.push_back(0);
    }
  }

  /// Updates the blocks flagged in `active`.
  void step(const std::vector<MatrixXd*>& params, const std::vector<MatrixXd>& grads, const std::vector<bool>& active) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!active[i]) continue;
      const int t = ++t_[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg_.beta1, t), c2 = 1.0 - std::pow(cfg_.beta2, t);
      params[i]->array() -=
          cfg_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.epsilon);
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<MatrixXd> m_, v_;
  std::vector<int> t_;
};

}  // namespace detail

/// Full-batch Adam. Joint mode alternates an observational step (f and g)
/// with an interventional step (g only) in every epoch. Returns the
/// parameters with the best validation loss.
inline TrainResult train(const TrainingData& data, const TrainConfig& cfg, TrainMode mode) {
  const bool use_obs = mode != TrainMode::InterventionalOnly;
  const bool use_int = mode != TrainMode::ObservationalOnly;
  if (use_obs && (data.obs_train.size() == 0 || data.obs_val.size() == 0))
    throw DataError("training needs observational train and validation samples");
  if (use_int && (data.int_train.size() == 0 || data.int_val.size() == 0))
    throw DataError("training needs interventional train and validation samples");
  if (!(cfg.learning_rate > 0.0) || cfg.patience <= 0 || cfg.max_epochs < 0)
    throw UsageError("invalid training configuration");
  for (const SampleBatch* b : {&data.obs_train, &data.obs_val, &data.int_train, &data.int_val})
    if (b->size() && b->c.rows() != cfg.flow.confounders)
      throw DataError("confounder dimension of the data does not match the flow configuration");

  TrainResult result;
  ReducedFlowModel model = ReducedFlowModel::initialize(cfg.flow, cfg.seed);
  auto params = model.parameters();
  const std::size_t nf = model.num_f_blocks();
  std::vector<bool> all(params.size(), true), g_only(params.size(), true);
  for (std::size_t i = 0; i < nf; ++i) g_only[i] = false;
  detail::Adam adam(params, cfg);

  auto validation = [&](const ReducedFlowModel& m) {
    double v = 0.0;
    if (use_obs) v += obs_loss_gradient(m, data.obs_val, false).loss;
    if (use_int) v += int_loss_gradient(m, data.int_val, cfg.grid, false).loss;
    return v;
  };

  result.model = model;
  try {
    result.best_validation_loss = validation(model);
    result.best_epoch = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      double train_loss = 0.0;
      if (use_obs) {
        const LossGradient lg = obs_loss_gradient(model, data.obs_train);
        train_loss += lg.loss;
        adam.step(params, lg.gradients, all);
      }
      if (use_int) {
        const LossGradient lg = int_loss_gradient(model, data.int_train, cfg.grid);
        train_loss += lg.loss;
        adam.step(params, lg.gradients, g_only);
      }
      const double val = validation(model);
      if (!std::isfinite(val)) throw NumericalError("validation loss is not finite");
      result.history.push_back({epoch, train_loss, val});
      if (val < result.best_validation_loss) {
        result.best_validation_loss = val;
        result.best_epoch = epoch;
        result.model = model;
      } else if (epoch - result.best_epoch >= cfg.patience) {
        result.early_stopped = true;
        break;
      }
    }
  } catch (const NumericalError& e) {
    result.diverged = true;
    result.divergence_message = e.what();
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sampling and evaluation

/// y ~ p(y | x): u = f(x), v ~ N(0, 1), y = g_{x,u}^{-1}(v).
inline double sample_observational(const ReducedFlowModel& m, double x, Rng& rng, const Eigen::VectorXd& c = {}) {
  std::normal_distribution<double> n01;
  const double u = m.f_transform(c).forward(x).first;
  return m.g_transform(x, u, c).inverse(n01(rng));
}

/// y ~ p(y | do(x)): u ~ N(0, 1), v ~ N(0, 1), y = g_{x,u}^{-1}(v).
inline double sample_interventional(const ReducedFlowModel& m, double x, Rng& rng, const Eigen::VectorXd& c = {}) {
  std::normal_distribution<double> n01;
  const double u = n01(rng);
  return m.g_transform(x, u, c).inverse(n01(rng));
}

struct EvaluationReport {
  double obs_nll = std::numeric_limits<double>::quiet_NaN();
  double int_nll = std::numeric_limits<double>::quiet_NaN();
  std::size_t obs_count = 0, int_count = 0, floored = 0;
};

inline EvaluationReport evaluate(const ReducedFlowModel& m, const SampleBatch& obs, const SampleBatch& intv,
                                 const IntegrationGrid& grid = {}) {
  if (obs.size() == 0 && intv.size() == 0) throw DataError("evaluate: empty test set");
  EvaluationReport r;
  auto mean_nll = [](const LikelihoodValues& lv) {
    double s = 0.0;
    for (double v : lv.values) s -= v;
    return s / static_cast<double>(lv.values.size());
  };
  if (obs.size()) {
    const auto lv = obs_log_likelihoods(m, obs);
    r.obs_nll = mean_nll(lv);
    r.obs_count = lv.values.size();
    r.floored += lv.floored;
  }
  if (intv.size()) {
    const auto lv = int_log_likelihoods(m, intv, grid);
    r.int_nll = mean_nll(lv);
    r.int_count = lv.values.size();
    r.floored += lv.floored;
  }
  return r;
}

inline EvaluationReport evaluate(const ReducedFlowModel& m, const RegimeDataset& d, Split split = Split::Test,
                                 const IntegrationGrid& grid = {}) {
  return evaluate(m, SampleBatch::from(d.select(Regime::Observational, split)),
                  SampleBatch::from(d.select(Regime::Interventional, split)), grid);
}

// ---------------------------------------------------------------------------
// Sample-efficiency benchmark

struct RatioBenchmarkConfig {
  std::vector<std::size_t> targets{50, 100, 250};
  std::vector<std::size_t> grid{50, 100, 250, 500, 750, 1000};
  std::size_t n_obs = 1000;
  TrainConfig train;
  std::size_t jobs = 1;
};

enum class RatioBound { Exact, AtLeast, AtMost };

struct RatioEntry {
  std::size_t dataset = 0;
  std::size_t n_int = 0;
  double joint_int_nll = 0.0;
  double n_star = 0.0;
  double ratio = 0.0;
  // AtLeast: the joint model beats every int-only model on the grid, so the
  // ratio is a lower bound. AtMost: the smallest grid model already matches
  // it, so the ratio is an upper bound.
  RatioBound bound = RatioBound::Exact;
};

inline const char* to_string(RatioBound b) {
  switch (b) {
    case RatioBound::AtLeast:
      return "at_least";
    case RatioBound::AtMost:
      return "at_most";
    default:
      return "exact";
  }
}

struct CurvePoint {
  std::size_t dataset = 0;
  std::size_t n_int = 0;
  double int_nll = 0.0;
};

struct RatioBenchmarkResult {
  std::vector<RatioEntry> entries;
  std::vector<CurvePoint> curves;  // int-only test NLL versus N_I (evaluated points only)
};

namespace detail {

inline TrainingData benchmark_data(const RegimeDataset& d, std::size_t n_obs, std::size_t n_int, bool with_obs) {
  TrainingData td;
  if (with_obs) {
    td.obs_train = SampleBatch::from(d.select(Regime::Observational, Split::Train, n_obs));
    td.obs_val = SampleBatch::from(d.select(Regime::Observational, Split::Validation, n_obs));
  }
  td.int_train = SampleBatch::from(d.select(Regime::Interventional, Split::Train, n_int));
  td.int_val = SampleBatch::from(d.select(Regime::Interventional, Split::Validation, n_int));
  if (static_cast<std::size_t>(td.int_train.size()) < n_int || static_cast<std::size_t>(td.int_val.size()) < n_int)
    throw DataError("dataset has fewer interventional samples than the benchmark grid requires");
  return td;
}

}  // namespace detail

/// Linear interpolation in log N between bracketing grid points
/// (n_lo, nll_lo) and (n_hi, nll_hi) at the level `target`.
inline double interpolate_log_n(double n_lo, double nll_lo, double n_hi, double nll_hi, double target) {
  if (nll_lo == nll_hi) return n_lo;
  const double t = std::clamp((nll_lo - target) / (nll_lo - nll_hi), 0.0, 1.0);
  return std::exp(std::log(n_lo) + t * (std::log(n_hi) - std::log(n_lo)));
}

/// For each dataset and target N_I: trains the joint model, then int-only
/// models along the grid (ascending, stopping at the first one that matches
/// the joint model) and reports N*_I / N_I. Int-only fits are shared across
/// targets. Seeds derive from (train.seed, dataset, N).
inline RatioBenchmarkResult ratio_benchmark(const std::vector<RegimeDataset>& datasets,
                                            const RatioBenchmarkConfig& cfg) {
  if (cfg.grid.empty() || !std::is_sorted(cfg.grid.begin(), cfg.grid.end()))
    throw UsageError("benchmark grid must be nonempty and ascending");
  const IntegrationGrid eval_grid;
  struct PerDataset {
    std::vector<RatioEntry> entries;
    std::vector<CurvePoint> curve;
  };
  std::vector<PerDataset> results(datasets.size());
  parallel_for(datasets.size(), cfg.jobs, [&](std::size_t di) {
    const RegimeDataset& d = datasets[di];
    const SampleBatch int_test = SampleBatch::from(d.select(Regime::Interventional, Split::Test));
    if (int_test.size() == 0) throw DataError("benchmark dataset has no interventional test split");
    std::vector<std::optional<double>> grid_nll(cfg.grid.size());
    auto int_only = [&](std::size_t gi) {
      if (!grid_nll[gi]) {
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.train.seed, di, 2 * cfg.grid[gi] + 1);
        const TrainResult tr = train(detail::benchmark_data(d, 0, cfg.grid[gi], false), tc,
                                     TrainMode::InterventionalOnly);
        grid_nll[gi] = evaluate(tr.model, SampleBatch{}, int_test, eval_grid).int_nll;
        results[di].curve.push_back({di, cfg.grid[gi], *grid_nll[gi]});
      }
      return *grid_nll[gi];
    };
    for (std::size_t target : cfg.targets) {
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.train.seed, di, 2 * target);
      const TrainResult tr = train(detail::benchmark_data(d, cfg.n_obs, target, true), tc, TrainMode::Joint);
      RatioEntry e;
      e.dataset = di;
      e.n_int = target;
      e.joint_int_nll = evaluate(tr.model, SampleBatch{}, int_test, eval_grid).int_nll;
      std::size_t gi = 0;
      while (gi < cfg.grid.size() && int_only(gi) > e.joint_int_nll) ++gi;
      if (gi == cfg.grid.size()) {
        e.bound = RatioBound::AtLeast;
        e.n_star = static_cast<double>(cfg.grid.back());
      } else if (gi == 0) {
        e.bound = RatioBound::AtMost;
        e.n_star = static_cast<double>(cfg.grid.front());
      } else {
        e.n_star = interpolate_log_n(static_cast<double>(cfg.grid[gi - 1]), int_only(gi - 1),
                                     static_cast<double>(cfg.grid[gi]), int_only(gi), e.joint_int_nll);
      }
      e.ratio = e.n_star / static_cast<double>(target);
      results[di].entries.push_back(e);
    }
    std::sort(results[di].curve.begin(), results[di].curve.end(),
              [](const CurvePoint& a, const CurvePoint& b) { return a.n_int < b.n_int; });
  });
  RatioBenchmarkResult out;
  for (auto& r : results) {
    out.entries.insert(out.entries.end(), r.entries.begin(), r.entries.end());
    out.curves.insert(out.curves.end(), r.curve.begin(), r.curve.end());
  }
  return out;
}

}  // namespace causal_reduction::flow
