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
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "causal_reduction/autodiff.hpp"
#include "causal_reduction/errors.hpp"
#include "causal_reduction/random.hpp"

namespace causal_reduction::flow {

/// Fully connected network with rectifier activations after every hidden
/// layer and a linear output layer. Inputs and outputs are column batches.
struct Mlp {
  std::vector<Eigen::MatrixXd> weights;  // layer l: out_l x in_l
  std::vector<Eigen::MatrixXd> biases;   // layer l: out_l x 1

  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Mlp init(Eigen::Index inputs, Eigen::Index hidden, int hidden_layers, Eigen::Index outputs, Rng& rng) {
    if (inputs < 1 || hidden < 1 || outputs < 1 || hidden_layers < 0) throw UsageError("Mlp: invalid layer sizes");
    Mlp net;
    Eigen::Index in = inputs;
    for (int l = 0; l <= hidden_layers; ++l) {
      const Eigen::Index out = l == hidden_layers ? outputs : hidden;
      const double s = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> u(-s, s);
      Eigen::MatrixXd w(out, in), b(out, 1);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
      for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
      net.weights.push_back(std::move(w));
      net.biases.push_back(std::move(b));
      in = out;
    }
    return net;
  }

  Eigen::Index inputs() const { return weights.front().cols(); }
  Eigen::Index outputs() const { return weights.back().rows(); }
  std::size_t layers() const { return weights.size(); }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    if (x.rows() != inputs()) throw UsageError("Mlp: input dimension mismatch");
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::MatrixXd z = weights[l] * h;
      z.colwise() += biases[l].col(0);
      h = l + 1 < weights.size() ? z.cwiseMax(0.0) : z;
    }
    return h;
  }

  /// Tape version; params holds the tape variables for (W_0, b_0, W_1, ...).
  ad::Var apply(ad::Var x, const std::vector<ad::Var>& params) const {
    if (params.size() != 2 * weights.size()) throw UsageError("Mlp: parameter variable count mismatch");
    ad::Var h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      h = ad::affine(params[2 * l], h, params[2 * l + 1]);
      if (l + 1 < weights.size()) h = ad::relu(h);
    }
    return h;
  }
};

}  // namespace causal_reduction::flow
