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
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causal_reduction/dataset.hpp"
#include "causal_reduction/errors.hpp"
#include "causal_reduction/numeric.hpp"
#include "causal_reduction/random.hpp"

/// Random nonlinear confounded (x, y) generators with paired observational
/// and interventional samples, and ranking by regime overlap.
namespace causal_reduction::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GammaPrior {
  double shape = 1.0;
  double scale = 1.0;  // mean = shape * scale
};

struct SplitSizes {
  std::size_t train = 1000;
  std::size_t validation = 1000;
  std::size_t test = 1000;
  std::size_t total() const { return train + validation + test; }
};

struct SimConfig {
  std::size_t latent = 1;        // K, dimension of the unobserved confounder Z
  std::size_t confounders = 0;   // L, dimension of the observed confounder C
  SplitSizes obs_splits;
  SplitSizes int_splits;
  GammaPrior e_x{5.0, 0.1}, e_y{5.0, 0.1}, z{5.0, 0.1}, x_int{5.0, 0.1};
  GammaPrior noise_x{2.0, 0.1}, noise_y{2.0, 0.1};
  GammaPrior c{10.0, 1.0};
  double jitter = 1e-4;  // GP noise standard deviation
  std::size_t hidden = 1024;
  std::uint64_t seed = 0;

  // Test hooks.
  bool zero_paths = false;            // GP paths identically zero
  bool ignore_latent_in_y = false;    // NN2 sees zeros in place of E_Y and Z

  void validate() const {
    if (latent < 1) throw UsageError("simulation needs at least one latent confounder");
    for (const GammaPrior* g : {&e_x, &e_y, &z, &x_int, &noise_x, &noise_y, &c})
      if (!(g->shape > 0.0) || !(g->scale > 0.0)) throw UsageError("gamma priors need positive shape and scale");
    if (!(jitter > 0.0)) throw UsageError("GP jitter must be positive");
    if (hidden < 1) throw UsageError("mechanism networks need a hidden layer");
    if (obs_splits.total() < 2 || int_splits.total() < 2) throw UsageError("each regime needs at least two samples");
  }
};

// ---------------------------------------------------------------------------
// Random distribution sampler

struct RandomDistributionDraw {
  std::vector<double> sorted_inputs;  // ascending standard normals
  std::vector<double> path;           // GP values F at sorted_inputs
  std::vector<double> sorted_values;  // G, cumulative trapezoid of exp(F)
  std::vector<double> values;         // G in the order the normals were drawn
  double jitter_used = 0.0;
};

namespace detail {

inline std::vector<double> cumulative_exp_trapezoid(const std::vector<double>& x, const std::vector<double>& f) {
  std::vector<double> e(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) e[i] = std::exp(f[i]);
  return cumulative_trapezoid(x, e);
}

}  // namespace detail

/// Draws n standard normals, sorts them, samples a unit-variance
/// squared-exponential GP path (lengthscale `lengthscale`, noise variance
/// sigma^2) at the sorted inputs and integrates exp(F) cumulatively.
/// The Cholesky jitter is escalated by 10x up to three times.
inline RandomDistributionDraw random_distribution_sample(double lengthscale, double sigma, std::size_t n, Rng& rng,
                                                        bool zero_path = false) {
  if (n < 2) throw UsageError("random distribution sampler needs n >= 2");
  if (!(lengthscale > 0.0) || !(sigma > 0.0)) throw UsageError("lengthscale and sigma must be positive");
  std::normal_distribution<double> n01;
  RandomDistributionDraw d;
  std::vector<double> raw(n);
  for (double& v : raw) v = n01(rng);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return raw[a] < raw[b]; });
  d.sorted_inputs.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.sorted_inputs[i] = raw[order[i]];

  const auto m = static_cast<Eigen::Index>(n);
  VectorXd xi(m);
  for (Eigen::Index i = 0; i < m; ++i) xi[i] = n01(rng);
  d.path.assign(n, 0.0);
  if (!zero_path) {
    MatrixXd k(m, m);
    const double inv = 1.0 / (lengthscale * lengthscale);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = j; i < m; ++i) {
        const double r = d.sorted_inputs[static_cast<std::size_t>(i)] - d.sorted_inputs[static_cast<std::size_t>(j)];
        k(i, j) = std::exp(-0.5 * r * r * inv);
      }
    double jitter = sigma * sigma;
    for (int attempt = 0;; ++attempt) {
      MatrixXd a = k;
      a.diagonal().array() += jitter;
      Eigen::LLT<MatrixXd, Eigen::Lower> llt(a);
      if (llt.info() == Eigen::Success) {
        const VectorXd f = llt.matrixL() * xi;
        for (Eigen::Index i = 0; i < m; ++i) d.path[static_cast<std::size_t>(i)] = f[i];
        d.jitter_used = jitter;
        break;
      }
      if (attempt == 3) throw NumericalError("GP Cholesky failed after jitter escalation");
      jitter *= 10.0;
    }
  }
  d.sorted_values = detail::cumulative_exp_trapezoid(d.sorted_inputs, d.path);
  d.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.values[order[i]] = d.sorted_values[i];
  return d;
}

// ---------------------------------------------------------------------------
// Mechanism networks

/// in -> hidden -> hidden -> 1 with rectifiers after the first two affine
/// maps; all weights and biases uniform on [-1, 1].
struct MechanismNet {
  MatrixXd w1, w2, w3;
  VectorXd b1, b2, b3;

  static MechanismNet init(std::size_t inputs, std::size_t hidden, Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto fill = [&](Eigen::Index r, Eigen::Index c) {
      MatrixXd m(r, c);
      for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
      return m;
    };
    const auto in = static_cast<Eigen::Index>(inputs), h = static_cast<Eigen::Index>(hidden);
    MechanismNet n;
    n.w1 = fill(h, in);
    n.b1 = fill(h, 1);
    n.w2 = fill(h, h);
    n.b2 = fill(h, 1);
    n.w3 = fill(1, h);
    n.b3 = fill(1, 1);
    return n;
  }

  /// inputs: one column per sample.
  std::vector<double> apply(const MatrixXd& inputs) const {
    MatrixXd h1 = w1 * inputs;
    h1.colwise() += b1;
    h1 = h1.cwiseMax(0.0);
    MatrixXd h2 = w2 * h1;
    h2.colwise() += b2;
    h2 = h2.cwiseMax(0.0);
    MatrixXd out = w3 * h2;
    out.array() += b3[0];
    return {out.data(), out.data() + out.size()};
  }
};

inline void standardize(std::vector<double>& v) {
  const double m = mean_of(v), s = std::sqrt(variance_of(v));
  if (!(s > 0.0)) throw NumericalError("cannot standardize a constant vector");
  for (double& x : v) x = (x - m) / s;
}

// ---------------------------------------------------------------------------
// Simulation

struct SimulatedDataset {
  RegimeDataset data;
  SimConfig config;
  // Realized hyperparameters.
  double theta_e_x = 0, theta_e_y = 0, theta_x_int = 0, theta_noise_x = 0, theta_noise_y = 0;
  std::vector<double> theta_z, theta_c;
  std::uint64_t description_hash = 0;
};

/// Canonical text describing a configuration (hashed into the sidecar).
inline std::string describe(const SimConfig& c) {
  std::string s = "sim-v1";
  auto add = [&](const char* k, const std::string& v) { s += std::string(";") + k + "=" + v; };
  auto g = [&](const char* k, const GammaPrior& p) { add(k, format_double(p.shape) + "/" + format_double(p.scale)); };
  add("K", std::to_string(c.latent));
  add("L", std::to_string(c.confounders));
  add("obs", std::to_string(c.obs_splits.train) + "/" + std::to_string(c.obs_splits.validation) + "/" +
                 std::to_string(c.obs_splits.test));
  add("int", std::to_string(c.int_splits.train) + "/" + std::to_string(c.int_splits.validation) + "/" +
                 std::to_string(c.int_splits.test));
  g("e_x", c.e_x);
  g("e_y", c.e_y);
  g("z", c.z);
  g("x_int", c.x_int);
  g("noise_x", c.noise_x);
  g("noise_y", c.noise_y);
  g("c", c.c);
  add("jitter", format_double(c.jitter));
  add("hidden", std::to_string(c.hidden));
  add("seed", std::to_string(c.seed));
  add("hooks", std::to_string(c.zero_paths) + std::to_string(c.ignore_latent_in_y));
  return s;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline double draw_gamma(const GammaPrior& g, Rng& rng) { return std::gamma_distribution<double>(g.shape, g.scale)(rng); }

// Each random quantity gets its own stream so that adding an observed
// confounder does not change the other draws.
enum Stream : std::uint64_t {
  kHyper = 1,
  kEx,
  kEyObs,
  kZObs,
  kEyInt,
  kZInt,
  kXInt,
  kNoise,
  kNet1,
  kNet2,
  kCObs,
  kCInt,
};

}  // namespace detail

/// Generates both regimes. Steps: latent draws (E_X, E_Y, Z and optional C)
/// from the random distribution sampler; x_obs = NN1(E_X, Z[, C]),
/// standardized; y_obs = NN2(x_obs, E_Y, Z[, C]); fresh E_Y, Z[, C] for the
/// interventional regime; x_int from the sampler, standardized on its own;
/// y_int = NN2(x_int, E_Y, Z[, C]); Gaussian noise on all four; joint
/// standardization of y.
inline SimulatedDataset simulate(const SimConfig& cfg) {
  cfg.validate();
  using namespace detail;
  SimulatedDataset out;
  out.config = cfg;
  out.description_hash = fnv1a64(describe(cfg));
  const std::size_t n_obs = cfg.obs_splits.total(), n_int = cfg.int_splits.total();
  const std::size_t K = cfg.latent, L = cfg.confounders;
  auto stream = [&](std::uint64_t s, std::uint64_t sub = 0) { return make_rng(derive_seed(cfg.seed, s, sub)); };

  Rng hyper = stream(kHyper);
  out.theta_e_x = draw_gamma(cfg.e_x, hyper);
  out.theta_e_y = draw_gamma(cfg.e_y, hyper);
  for (std::size_t k = 0; k < K; ++k) out.theta_z.push_back(draw_gamma(cfg.z, hyper));
  out.theta_x_int = draw_gamma(cfg.x_int, hyper);
  out.theta_noise_x = draw_gamma(cfg.noise_x, hyper);
  out.theta_noise_y = draw_gamma(cfg.noise_y, hyper);
  for (std::size_t l = 0; l < L; ++l) out.theta_c.push_back(draw_gamma(cfg.c, hyper));

  auto rd = [&](double theta, std::size_t n, std::uint64_t s, std::uint64_t sub) {
    Rng r = stream(s, sub);
    return random_distribution_sample(theta, cfg.jitter, n, r, cfg.zero_paths).values;
  };
  auto latent_block = [&](std::size_t n, std::uint64_t z_stream, std::uint64_t c_stream) {
    // rows 0..K-1: Z, rows K..K+L-1: C
    MatrixXd m(static_cast<Eigen::Index>(K + L), static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < K; ++k) {
      const auto v = rd(out.theta_z[k], n, z_stream, k);
      m.row(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(n));
    }
    for (std::size_t l = 0; l < L; ++l) {
      const auto v = rd(out.theta_c[l], n, c_stream, l);
      m.row(static_cast<Eigen::Index>(K + l)) =
          Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(n));
    }
    return m;
  };

  Rng net1_rng = stream(kNet1), net2_rng = stream(kNet2);
  const MechanismNet nn1 = MechanismNet::init(1 + K + L, cfg.hidden, net1_rng);
  const MechanismNet nn2 = MechanismNet::init(2 + K + L, cfg.hidden, net2_rng);

  auto nn2_inputs = [&](const std::vector<double>& x, const std::vector<double>& e_y, const MatrixXd& zc) {
    const auto n = static_cast<Eigen::Index>(x.size());
    MatrixXd in(2 + zc.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
      in(0, i) = x[static_cast<std::size_t>(i)];
      in(1, i) = cfg.ignore_latent_in_y ? 0.0 : e_y[static_cast<std::size_t>(i)];
    }
    in.bottomRows(zc.rows()) = zc;
    if (cfg.ignore_latent_in_y) in.middleRows(2, static_cast<Eigen::Index>(K)).setZero();
    return in;
  };

  // Observational regime.
  const auto e_x = rd(out.theta_e_x, n_obs, kEx, 0);
  const auto e_y_obs = rd(out.theta_e_y, n_obs, kEyObs, 0);
  const MatrixXd zc_obs = latent_block(n_obs, kZObs, kCObs);
  MatrixXd in1(1 + zc_obs.rows(), static_cast<Eigen::Index>(n_obs));
  in1.row(0) = Eigen::Map<const Eigen::RowVectorXd>(e_x.data(), static_cast<Eigen::Index>(n_obs));
  in1.bottomRows(zc_obs.rows()) = zc_obs;
  std::vector<double> x_obs = nn1.apply(in1);
  standardize(x_obs);
  std::vector<double> y_obs = nn2.apply(nn2_inputs(x_obs, e_y_obs, zc_obs));

  // Interventional regime.
  const auto e_y_int = rd(out.theta_e_y, n_int, kEyInt, 0);
  const MatrixXd zc_int = latent_block(n_int, kZInt, kCInt);
  std::vector<double> x_int = rd(out.theta_x_int, n_int, kXInt, 0);
  standardize(x_int);
  std::vector<double> y_int = nn2.apply(nn2_inputs(x_int, e_y_int, zc_int));

  // Noise.
  Rng noise = stream(kNoise);
  std::normal_distribution<double> n01;
  for (double& v : x_obs) v += out.theta_noise_x * n01(noise);
  for (double& v : x_int) v += out.theta_noise_x * n01(noise);
  for (double& v : y_obs) v += out.theta_noise_y * n01(noise);
  for (double& v : y_int) v += out.theta_noise_y * n01(noise);

  // Joint standardization of y.
  std::vector<double> all_y = y_obs;
  all_y.insert(all_y.end(), y_int.begin(), y_int.end());
  const double my = mean_of(all_y), sy = std::sqrt(variance_of(all_y));
  if (!(sy > 0.0)) throw NumericalError("simulated y is constant");
  for (double& v : y_obs) v = (v - my) / sy;
  for (double& v : y_int) v = (v - my) / sy;

  out.data = RegimeDataset(L);
  auto emit = [&](Regime r, const std::vector<double>& x, const std::vector<double>& y, const MatrixXd& zc,
                  const SplitSizes& sizes) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      RegimeRow row;
      row.regime = r;
      row.x = x[i];
      row.y = y[i];
      for (std::size_t l = 0; l < L; ++l) row.c.push_back(zc(static_cast<Eigen::Index>(K + l), static_cast<Eigen::Index>(i)));
      row.split = i < sizes.train ? Split::Train : i < sizes.train + sizes.validation ? Split::Validation : Split::Test;
      out.data.add(std::move(row));
    }
  };
  emit(Regime::Observational, x_obs, y_obs, zc_obs, cfg.obs_splits);
  emit(Regime::Interventional, x_int, y_int, zc_int, cfg.int_splits);
  return out;
}

// ---------------------------------------------------------------------------
// Overlap score and selection

namespace detail {

// Scott's rule per coordinate for a product Gaussian kernel in 2-D.
inline std::pair<double, double> kde_bandwidths(const std::vector<double>& x, const std::vector<double>& y) {
  const double f = std::pow(static_cast<double>(x.size()), -1.0 / 6.0);
  return {std::max(std::sqrt(variance_of(x)), 1e-12) * f, std::max(std::sqrt(variance_of(y)), 1e-12) * f};
}

// Mean log KDE density of query points; skip_self drops the diagonal
// (leave-one-out) when the query set is the reference set.
inline double mean_log_kde(const std::vector<double>& rx, const std::vector<double>& ry,
                           const std::vector<double>& qx, const std::vector<double>& qy, double hx, double hy,
                           bool skip_self) {
  const std::size_t n = rx.size();
  const double norm = std::log(static_cast<double>(skip_self ? n - 1 : n)) + std::log(2.0 * M_PI * hx * hy);
  std::vector<double> terms;
  terms.reserve(n);
  double total = 0.0;
  for (std::size_t i = 0; i < qx.size(); ++i) {
    terms.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (skip_self && i == j) continue;
      const double dx = (qx[i] - rx[j]) / hx, dy = (qy[i] - ry[j]) / hy;
      terms.push_back(-0.5 * (dx * dx + dy * dy));
    }
    total += log_sum_exp(terms) - norm;
  }
  return total / static_cast<double>(qx.size());
}

}  // namespace detail

/// Overlap of the interventional sample with the observational joint:
/// exp(mean log KDE density of interventional points under the
/// observational KDE minus the leave-one-out mean for observational points).
/// About 1 for identical regimes, 0 for disjoint ones.
inline double overlap_score(const RegimeDataset& d, std::size_t max_points = 1000) {
  auto take = [&](Regime r) {
    std::vector<double> x, y;
    for (const auto& row : d.rows()) {
      if (row.regime != r) continue;
      if (x.size() == max_points) break;
      x.push_back(row.x);
      y.push_back(row.y);
    }
    return std::make_pair(x, y);
  };
  const auto [ox, oy] = take(Regime::Observational);
  const auto [ix, iy] = take(Regime::Interventional);
  if (ox.size() < 2 || ix.empty()) throw DataError("overlap score needs both regimes");
  const auto [hx, hy] = detail::kde_bandwidths(ox, oy);
  const double inter = detail::mean_log_kde(ox, oy, ix, iy, hx, hy, false);
  const double self = detail::mean_log_kde(ox, oy, ox, oy, hx, hy, true);
  return std::exp(inter - self);
}

/// Indices of the k datasets with the smallest overlap, ascending by score
/// (ties by index).
inline std::vector<std::size_t> select_confounded(const std::vector<double>& scores, std::size_t k) {
  if (k > scores.size()) throw UsageError("cannot select more datasets than there are candidates");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  idx.resize(k);
  return idx;
}

inline std::vector<std::size_t> select_confounded(const std::vector<RegimeDataset>& datasets, std::size_t k) {
  std::vector<double> scores;
  for (const auto& d : datasets) scores.push_back(overlap_score(d));
  return select_confounded(scores, k);
}

}  // namespace causal_reduction::sim
