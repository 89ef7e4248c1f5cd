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

#include <string>
#include <utility>

#include "causal_reduction/serialization.hpp"

namespace {

using namespace causal_reduction;
using io::Json;

std::string round_trip_text(const Json& j) { return Json::parse(j.dump()).dump(); }

TEST(Serialization, FlowCheckpointIsBitExact) {
  for (Eigen::Index L : {0, 2}) {
    flow::FlowConfig cfg;
    cfg.bins = 5;
    cfg.hidden = 7;
    cfg.confounders = L;
    auto m = flow::ReducedFlowModel::initialize(cfg, 42);
    // Perturb f so that it is not the all-zero initial state.
    Rng rng = make_rng(1);
    std::normal_distribution<double> n01;
    for (auto* p : m.f_parameters())
      for (Eigen::Index i = 0; i < p->size(); ++i) p->data()[i] += n01(rng) * 1e-3 / 3.0;
    const auto back = io::flow_model_from_json(Json::parse(io::to_json(m).dump()));
    const auto a = std::as_const(m).parameters();
    const auto b = back.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ASSERT_EQ(a[i]->rows(), b[i]->rows());
      ASSERT_EQ(a[i]->cols(), b[i]->cols());
      for (Eigen::Index k = 0; k < a[i]->size(); ++k) EXPECT_EQ(a[i]->data()[k], b[i]->data()[k]);
    }
    EXPECT_EQ(back.seed(), 42u);
    EXPECT_EQ(back.config().confounders, L);
    EXPECT_EQ(io::to_json(back).dump(), io::to_json(m).dump());
  }
}

TEST(Serialization, CheckpointErrors) {
  auto m = flow::ReducedFlowModel::initialize({}, 1);
  Json j = io::to_json(m);
  Json bad = j;
  bad["format"] = "something-else";
  EXPECT_THROW(io::flow_model_from_json(bad), DataError);
  bad = j;
  bad["parameters"].erase(bad["parameters"].size() - 1);
  EXPECT_THROW(io::flow_model_from_json(bad), DataError);
  bad = j;
  bad.erase("seed");
  try {
    io::flow_model_from_json(bad);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("'seed'"), std::string::npos);
  }
}

TEST(Serialization, DiscreteAndLinearModels) {
  const discrete::DiscreteCBN cbn(2, 3, 2, {0.3, 0.7}, {0.1, 0.9, 0.6, 0.4},
                                  {0.2, 0.3, 0.5, 0.1, 0.1, 0.8, 0.3, 0.3, 0.4, 1.0 / 3, 1.0 / 3, 1.0 / 3});
  const auto cbn2 = io::cbn_from_json(Json::parse(io::to_json(cbn).dump()));
  EXPECT_EQ(cbn2.p_y_given_xz_table(), cbn.p_y_given_xz_table());
  const auto red = discrete::reduce(cbn);
  const auto red2 = io::reduced_from_json(Json::parse(io::to_json(red).dump()));
  EXPECT_EQ(red2.p_y_given_xw_table(), red.p_y_given_xw_table());

  linear::ReducedLinearSCM s;
  s.a = Eigen::VectorXd::Constant(1, 0.1);
  s.B = Eigen::MatrixXd::Constant(1, 1, 1.0 / 7.0);
  s.c = Eigen::VectorXd::Constant(1, -2.5);
  s.D = Eigen::MatrixXd::Constant(1, 1, 0.3);
  s.E = Eigen::MatrixXd::Constant(1, 1, 1e-300);
  s.F = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const auto s2 = io::linear_scm_from_json(Json::parse(io::to_json(s).dump()));
  EXPECT_EQ(s2.B(0, 0), s.B(0, 0));
  EXPECT_EQ(s2.E(0, 0), s.E(0, 0));
}

TEST(Serialization, SimConfigNamesMissingAndUnknownFields) {
  sim::SimConfig c;
  c.latent = 3;
  c.confounders = 1;
  c.seed = 99;
  c.noise_x = {2.0, 0.05};
  const Json j = io::to_json(c);
  EXPECT_EQ(round_trip_text(j), io::to_json(io::sim_config_from_json(j)).dump());
  EXPECT_EQ(sim::describe(io::sim_config_from_json(j)), sim::describe(c));

  Json missing = j;
  missing.erase("latent");
  try {
    io::sim_config_from_json(missing);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("'latent'"), std::string::npos);
  }
  Json typo = j;
  typo["jiter"] = 1e-4;
  EXPECT_THROW(io::sim_config_from_json(typo), UsageError);
  Json gamma = j;
  gamma["z"].erase("scale");
  try {
    io::sim_config_from_json(gamma);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("simulation.z"), std::string::npos);
  }
}

TEST(Serialization, TrainConfigDefaultsAndOverrides) {
  const auto c = io::train_config_from_json(Json::parse(R"({"max_epochs": 7, "flow": {"bins": 4}, "grid": {"points": 11}})"));
  EXPECT_EQ(c.max_epochs, 7);
  EXPECT_EQ(c.flow.bins, 4);
  EXPECT_EQ(c.flow.hidden, 64);
  EXPECT_EQ(c.grid.points, 11);
  EXPECT_THROW(io::train_config_from_json(Json::parse(R"({"max_epochs": 1.5})")), UsageError);
  EXPECT_THROW(io::train_config_from_json(Json::parse(R"({"seed": -1})")), UsageError);
}

TEST(Serialization, NonFiniteBecomesNull) {
  flow::EvaluationReport r;
  r.int_nll = 1.25;
  const Json j = io::to_json(r);
  EXPECT_TRUE(j["obs_nll"].is_null());
  EXPECT_EQ(j["int_nll"].get<double>(), 1.25);
}

}  // namespace
