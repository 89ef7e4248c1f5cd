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
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "causal_reduction/discrete_core.hpp"
#include "causal_reduction/discrete_estimation.hpp"
#include "causal_reduction/errors.hpp"
#include "causal_reduction/flow_estimation.hpp"
#include "causal_reduction/linear_gaussian.hpp"
#include "causal_reduction/synthetic_data.hpp"

/// JSON encodings for models, configurations and reports. Doubles are
/// written in shortest round-trip form, so load(save(m)) is bit-exact.
namespace causal_reduction::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kFlowCheckpointFormat = "causal-reduce/flow-checkpoint/1";
inline constexpr const char* kLinearModelFormat = "causal-reduce/linear-scm/1";
inline constexpr const char* kDiscreteModelFormat = "causal-reduce/discrete-model/1";

// ---------------------------------------------------------------------------
// Field access with diagnostics. `where` names the enclosing object.

namespace detail {

inline const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + ": expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw UsageError(where + ": missing field '" + key + "'");
  return *it;
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + ": expected a JSON object");
  const std::set<std::string> names(known.begin(), known.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!names.count(it.key())) throw UsageError(where + ": unknown field '" + it.key() + "'");
}

inline double as_double(const Json& v, const std::string& what) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) throw UsageError(what + ": expected a number");
  return v.get<double>();
}

inline std::uint64_t as_u64(const Json& v, const std::string& what) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw UsageError(what + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

template <typename T>
void read_opt(const Json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  const std::string what = where + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw UsageError(what + ": expected true or false");
    out = it->template get<bool>();
  } else if constexpr (std::is_floating_point_v<T>) {
    out = as_double(*it, what);
  } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    out = static_cast<T>(as_u64(*it, what));
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) throw UsageError(what + ": expected an integer");
    out = it->template get<T>();
  } else {
    out = it->template get<T>();
  }
}

template <typename T>
T read_req(const Json& j, const char* key, const std::string& where) {
  field(j, key, where);
  T v{};
  read_opt(j, key, v, where);
  return v;
}

inline std::vector<double> doubles(const Json& v, const std::string& what) {
  if (!v.is_array()) throw UsageError(what + ": expected an array");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(as_double(e, what));
  return out;
}

}  // namespace detail

inline Json double_value(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

/// Matrices as nested row arrays.
inline Json to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(double_value(m(i, k)));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw UsageError(what + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].is_array() ? j[0].size() : 0) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto r = detail::doubles(j[static_cast<std::size_t>(i)], what);
    if (static_cast<Eigen::Index>(r.size()) != cols) throw UsageError(what + ": ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = r[static_cast<std::size_t>(k)];
  }
  return m;
}

inline Json to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(double_value(v[i]));
  return a;
}

inline Eigen::VectorXd vector_from_json(const Json& j, const std::string& what) {
  const auto d = detail::doubles(j, what);
  return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
}

inline Json to_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(double_value(x));
  return a;
}

// ---------------------------------------------------------------------------
// Discrete models

inline Json to_json(const discrete::DiscreteCBN& m) {
  return Json{{"format", kDiscreteModelFormat},
              {"type", "cbn"},
              {"card_x", m.card_x()},
              {"card_y", m.card_y()},
              {"card_z", m.card_z()},
              {"p_z", to_json(m.p_z_table())},
              {"p_x_given_z", to_json(m.p_x_given_z_table())},
              {"p_y_given_xz", to_json(m.p_y_given_xz_table())}};
}

inline Json to_json(const discrete::ReducedDiscreteModel& m) {
  Json undefined = Json::array();
  for (bool b : m.undefined_rows()) undefined.push_back(b);
  return Json{{"format", kDiscreteModelFormat},
              {"type", "reduced"},
              {"card_x", m.card_x()},
              {"card_y", m.card_y()},
              {"p_w", to_json(m.p_w_table())},
              {"p_y_given_xw", to_json(m.p_y_given_xw_table())},
              {"undefined_w", undefined}};
}

inline discrete::DiscreteCBN cbn_from_json(const Json& j) {
  const std::string w = "discrete model";
  if (detail::read_req<std::string>(j, "type", w) != "cbn") throw UsageError(w + ": expected type 'cbn'");
  return discrete::DiscreteCBN(detail::read_req<std::size_t>(j, "card_x", w), detail::read_req<std::size_t>(j, "card_y", w),
                               detail::read_req<std::size_t>(j, "card_z", w),
                               detail::doubles(detail::field(j, "p_z", w), w + ".p_z"),
                               detail::doubles(detail::field(j, "p_x_given_z", w), w + ".p_x_given_z"),
                               detail::doubles(detail::field(j, "p_y_given_xz", w), w + ".p_y_given_xz"));
}

inline discrete::ReducedDiscreteModel reduced_from_json(const Json& j) {
  const std::string w = "reduced model";
  std::vector<bool> undefined;
  if (j.contains("undefined_w"))
    for (const auto& b : j["undefined_w"]) undefined.push_back(b.get<bool>());
  return discrete::ReducedDiscreteModel(detail::read_req<std::size_t>(j, "card_x", w),
                                        detail::read_req<std::size_t>(j, "card_y", w),
                                        detail::doubles(detail::field(j, "p_w", w), w + ".p_w"),
                                        detail::doubles(detail::field(j, "p_y_given_xw", w), w + ".p_y_given_xw"),
                                        std::move(undefined));
}

inline Json to_json(const discrete::CountTables& c) { return Json{{"n_obs", to_json(c.n_obs())}, {"n_int", to_json(c.n_int())}}; }

inline discrete::CountTables counts_from_json(const Json& j) {
  return discrete::CountTables(matrix_from_json(detail::field(j, "n_obs", "counts"), "counts.n_obs"),
                               matrix_from_json(detail::field(j, "n_int", "counts"), "counts.n_int"));
}

inline Json to_json(const discrete::DiscreteParams& p) {
  return Json{{"phi", to_json(p.phi)}, {"theta", to_json(p.theta)}, {"psi", to_json(p.psi)}};
}

inline Json to_json(const discrete::BoundTable& b) { return Json{{"lower", to_json(b.lower)}, {"upper", to_json(b.upper)}}; }

inline Json to_json(const discrete::EstimatorSummary& s) {
  return Json{{"mean", double_value(s.mean)},
              {"bias", double_value(s.bias)},
              {"variance", double_value(s.variance)},
              {"mse", double_value(s.mse)},
              {"failures", s.failures}};
}

inline Json to_json(const discrete::MonteCarloReport& r) {
  return Json{{"true_ate", r.true_ate},
              {"replications", r.replications},
              {"seed", r.seed},
              {"interventional_only", to_json(r.interventional_only)},
              {"combined", to_json(r.combined)}};
}

// ---------------------------------------------------------------------------
// Linear-Gaussian

inline Json to_json(const linear::ReducedLinearSCM& s) {
  return Json{{"format", kLinearModelFormat}, {"a", to_json(s.a)}, {"B", to_json(s.B)}, {"c", to_json(s.c)},
              {"D", to_json(s.D)},           {"E", to_json(s.E)}, {"F", to_json(s.F)}};
}

inline linear::ReducedLinearSCM linear_scm_from_json(const Json& j) {
  const std::string w = "linear model";
  linear::ReducedLinearSCM s;
  s.a = vector_from_json(detail::field(j, "a", w), w + ".a");
  s.B = matrix_from_json(detail::field(j, "B", w), w + ".B");
  s.c = vector_from_json(detail::field(j, "c", w), w + ".c");
  s.D = matrix_from_json(detail::field(j, "D", w), w + ".D");
  s.E = matrix_from_json(detail::field(j, "E", w), w + ".E");
  s.F = matrix_from_json(detail::field(j, "F", w), w + ".F");
  s.validate();
  return s;
}

inline Json to_json(const linear::GaussianRegimeParams& p) {
  return Json{{"alpha", to_json(p.alpha)},     {"Sigma", to_json(p.Sigma)}, {"gamma", to_json(p.gamma)},
              {"Delta", to_json(p.Delta)},     {"Pi", to_json(p.Pi)},       {"gamma_t", to_json(p.gamma_t)},
              {"Delta_t", to_json(p.Delta_t)}, {"Pi_t", to_json(p.Pi_t)}};
}

inline Json to_json(const linear::ConstraintReport& r) {
  return Json{{"mean_residual", r.mean_residual},
              {"covariance_residual", r.covariance_residual},
              {"min_eig_gap", r.min_eig_gap},
              {"pass", r.pass}};
}

// ---------------------------------------------------------------------------
// Flow models and training

inline Json to_json(const flow::FlowConfig& c) {
  return Json{{"bins", c.bins},
              {"bound", c.bound},
              {"hidden", c.hidden},
              {"hidden_layers", c.hidden_layers},
              {"confounders", c.confounders}};
}

inline flow::FlowConfig flow_config_from_json(const Json& j, const std::string& w = "flow") {
  detail::reject_unknown(j, {"bins", "bound", "hidden", "hidden_layers", "confounders"}, w);
  flow::FlowConfig c;
  detail::read_opt(j, "bins", c.bins, w);
  detail::read_opt(j, "bound", c.bound, w);
  detail::read_opt(j, "hidden", c.hidden, w);
  detail::read_opt(j, "hidden_layers", c.hidden_layers, w);
  detail::read_opt(j, "confounders", c.confounders, w);
  return c;
}

inline Json to_json(const flow::IntegrationGrid& g) { return Json{{"lo", g.lo}, {"hi", g.hi}, {"points", g.points}}; }

inline flow::IntegrationGrid grid_from_json(const Json& j, const std::string& w = "grid") {
  detail::reject_unknown(j, {"lo", "hi", "points"}, w);
  flow::IntegrationGrid g;
  detail::read_opt(j, "lo", g.lo, w);
  detail::read_opt(j, "hi", g.hi, w);
  detail::read_opt(j, "points", g.points, w);
  return g;
}

inline Json to_json(const flow::TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"epsilon", c.epsilon},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"seed", c.seed},
              {"grid", to_json(c.grid)},
              {"flow", to_json(c.flow)}};
}

inline flow::TrainConfig train_config_from_json(const Json& j, const std::string& w = "train") {
  detail::reject_unknown(j, {"learning_rate", "beta1", "beta2", "epsilon", "max_epochs", "patience", "seed", "grid", "flow"}, w);
  flow::TrainConfig c;
  detail::read_opt(j, "learning_rate", c.learning_rate, w);
  detail::read_opt(j, "beta1", c.beta1, w);
  detail::read_opt(j, "beta2", c.beta2, w);
  detail::read_opt(j, "epsilon", c.epsilon, w);
  detail::read_opt(j, "max_epochs", c.max_epochs, w);
  detail::read_opt(j, "patience", c.patience, w);
  detail::read_opt(j, "seed", c.seed, w);
  if (j.contains("grid")) c.grid = grid_from_json(j["grid"], w + ".grid");
  if (j.contains("flow")) c.flow = flow_config_from_json(j["flow"], w + ".flow");
  return c;
}

/// Self-describing checkpoint: configuration, seed and every parameter block
/// in the order of ReducedFlowModel::parameters().
inline Json to_json(const flow::ReducedFlowModel& m) {
  Json blocks = Json::array();
  for (const Eigen::MatrixXd* p : m.parameters()) blocks.push_back(to_json(*p));
  return Json{{"format", kFlowCheckpointFormat},
              {"config", to_json(m.config())},
              {"seed", m.seed()},
              {"f_blocks", m.num_f_blocks()},
              {"parameters", blocks}};
}

inline flow::ReducedFlowModel flow_model_from_json(const Json& j) {
  const std::string w = "checkpoint";
  const auto format = detail::read_req<std::string>(j, "format", w);
  if (format != kFlowCheckpointFormat) throw DataError(w + ": unsupported format '" + format + "'");
  const flow::FlowConfig cfg = flow_config_from_json(detail::field(j, "config", w), w + ".config");
  auto m = flow::ReducedFlowModel::initialize(cfg, detail::read_req<std::uint64_t>(j, "seed", w));
  const Json& blocks = detail::field(j, "parameters", w);
  if (!blocks.is_array()) throw DataError(w + ".parameters: expected an array");
  std::vector<Eigen::MatrixXd> mats;
  for (std::size_t i = 0; i < blocks.size(); ++i)
    mats.push_back(matrix_from_json(blocks[i], w + ".parameters[" + std::to_string(i) + "]"));
  // Column vectors of width one survive as n x 1 row arrays.
  m.set_parameters(mats);
  return m;
}

inline Json to_json(const flow::EvaluationReport& r) {
  return Json{{"obs_nll", double_value(r.obs_nll)},
              {"int_nll", double_value(r.int_nll)},
              {"obs_count", r.obs_count},
              {"int_count", r.int_count},
              {"floored", r.floored}};
}

/// Training summary without the model itself.
inline Json to_json(const flow::TrainResult& r, flow::TrainMode mode) {
  Json history = Json::array();
  for (const auto& e : r.history)
    history.push_back(Json{{"epoch", e.epoch}, {"train_loss", double_value(e.train_loss)},
                           {"validation_loss", double_value(e.validation_loss)}});
  return Json{{"mode", flow::to_string(mode)},
              {"best_epoch", r.best_epoch},
              {"best_validation_loss", double_value(r.best_validation_loss)},
              {"epochs_run", r.history.size()},
              {"early_stopped", r.early_stopped},
              {"diverged", r.diverged},
              {"divergence_message", r.divergence_message},
              {"history", history}};
}

inline Json to_json(const flow::RatioBenchmarkConfig& c) {
  return Json{{"targets", c.targets}, {"grid", c.grid}, {"n_obs", c.n_obs}, {"train", to_json(c.train)}};
}

inline flow::RatioBenchmarkConfig ratio_config_from_json(const Json& j, const std::string& w = "benchmark") {
  detail::reject_unknown(j, {"targets", "grid", "n_obs", "train"}, w);
  flow::RatioBenchmarkConfig c;
  detail::read_opt(j, "targets", c.targets, w);
  detail::read_opt(j, "grid", c.grid, w);
  detail::read_opt(j, "n_obs", c.n_obs, w);
  if (j.contains("train")) c.train = train_config_from_json(j["train"], w + ".train");
  return c;
}

// ---------------------------------------------------------------------------
// Simulation

inline Json to_json(const sim::GammaPrior& g) { return Json{{"shape", g.shape}, {"scale", g.scale}}; }

inline sim::GammaPrior gamma_from_json(const Json& j, const std::string& w) {
  detail::reject_unknown(j, {"shape", "scale"}, w);
  return {detail::read_req<double>(j, "shape", w), detail::read_req<double>(j, "scale", w)};
}

inline Json to_json(const sim::SplitSizes& s) {
  return Json{{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

inline sim::SplitSizes splits_from_json(const Json& j, const std::string& w) {
  detail::reject_unknown(j, {"train", "validation", "test"}, w);
  sim::SplitSizes s;
  detail::read_opt(j, "train", s.train, w);
  detail::read_opt(j, "validation", s.validation, w);
  detail::read_opt(j, "test", s.test, w);
  return s;
}

inline Json to_json(const sim::SimConfig& c) {
  return Json{{"latent", c.latent},
              {"confounders", c.confounders},
              {"obs_splits", to_json(c.obs_splits)},
              {"int_splits", to_json(c.int_splits)},
              {"gamma_convention", "shape-scale"},
              {"e_x", to_json(c.e_x)},
              {"e_y", to_json(c.e_y)},
              {"z", to_json(c.z)},
              {"x_int", to_json(c.x_int)},
              {"noise_x", to_json(c.noise_x)},
              {"noise_y", to_json(c.noise_y)},
              {"c", to_json(c.c)},
              {"jitter", c.jitter},
              {"hidden", c.hidden},
              {"seed", c.seed}};
}

/// `latent` and `confounders` are required; everything else has defaults.
inline sim::SimConfig sim_config_from_json(const Json& j, const std::string& w = "simulation") {
  detail::reject_unknown(j,
                         {"latent", "confounders", "obs_splits", "int_splits", "gamma_convention", "e_x", "e_y", "z",
                          "x_int", "noise_x", "noise_y", "c", "jitter", "hidden", "seed"},
                         w);
  sim::SimConfig c;
  c.latent = detail::read_req<std::size_t>(j, "latent", w);
  c.confounders = detail::read_req<std::size_t>(j, "confounders", w);
  if (j.contains("gamma_convention") && j["gamma_convention"] != "shape-scale")
    throw UsageError(w + ".gamma_convention: only 'shape-scale' is supported");
  if (j.contains("obs_splits")) c.obs_splits = splits_from_json(j["obs_splits"], w + ".obs_splits");
  if (j.contains("int_splits")) c.int_splits = splits_from_json(j["int_splits"], w + ".int_splits");
  for (auto [key, prior] : {std::pair{"e_x", &c.e_x}, {"e_y", &c.e_y}, {"z", &c.z}, {"x_int", &c.x_int},
                            {"noise_x", &c.noise_x}, {"noise_y", &c.noise_y}, {"c", &c.c}})
    if (j.contains(key)) *prior = gamma_from_json(j[key], w + "." + key);
  detail::read_opt(j, "jitter", c.jitter, w);
  detail::read_opt(j, "hidden", c.hidden, w);
  detail::read_opt(j, "seed", c.seed, w);
  c.validate();
  return c;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline Json sidecar(const sim::SimulatedDataset& d) {
  return Json{{"config", to_json(d.config)},
              {"description_hash", hex64(d.description_hash)},
              {"hyperparameters",
               Json{{"e_x", d.theta_e_x},
                    {"e_y", d.theta_e_y},
                    {"x_int", d.theta_x_int},
                    {"noise_x", d.theta_noise_x},
                    {"noise_y", d.theta_noise_y},
                    {"z", to_json(d.theta_z)},
                    {"c", to_json(d.theta_c)}}},
              {"rows", d.data.size()}};
}

}  // namespace causal_reduction::io
