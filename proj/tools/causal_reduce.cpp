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

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "causal_reduction/dataset.hpp"
#include "causal_reduction/discrete_core.hpp"
#include "causal_reduction/discrete_estimation.hpp"
#include "causal_reduction/errors.hpp"
#include "causal_reduction/flow_estimation.hpp"
#include "causal_reduction/linear_gaussian.hpp"
#include "causal_reduction/serialization.hpp"
#include "causal_reduction/synthetic_data.hpp"

namespace fs = std::filesystem;
namespace cr = causal_reduction;
using cr::io::Json;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

// ---------------------------------------------------------------------------
// Logging

enum class LogLevel { Quiet, Error, Warn, Info, Debug };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("CAUSAL_REDUCE_LOG");
    const std::string s = v ? v : "warn";
    if (s == "quiet" || s == "off") return LogLevel::Quiet;
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"", "error", "warn", "info", "debug"};
  if (level <= log_level()) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// Run context: options, recorded inputs and outputs, manifest.

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::size_t jobs = 1;
  std::string mode;
  std::string data;
  std::string model;
  std::string split = "test";
  std::string regime;
  std::size_t select = 0;
};

struct Run {
  std::string command;
  Options opt;
  bool seed_given = false;
  Json config = Json::object();
  Json inputs = Json::array();
  Json outputs = Json::array();

  fs::path out_path(const std::string& name) const { return fs::path(opt.out) / name; }

  std::string read(const std::string& path, bool is_config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      const std::string msg = "cannot open '" + path + "'";
      if (is_config) throw cr::UsageError(msg);
      throw cr::DataError(msg);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    inputs.push_back(Json{{"path", path}, {"bytes", text.size()}, {"fnv1a64", cr::io::hex64(cr::sim::fnv1a64(text))}});
    return text;
  }

  Json read_json(const std::string& path, bool is_config) {
    const std::string text = read(path, is_config);
    try {
      return Json::parse(text);
    } catch (const Json::exception& e) {
      const std::string msg = "'" + path + "' is not valid JSON: " + e.what();
      if (is_config) throw cr::UsageError(msg);
      throw cr::DataError(msg);
    }
  }

  Json config_json() {
    if (opt.config.empty()) return Json::object();
    return read_json(opt.config, true);
  }

  cr::RegimeDataset read_dataset(const std::string& path) {
    if (path.empty()) throw cr::UsageError("--data is required");
    std::istringstream is(read(path, false));
    return cr::read_csv(is);
  }

  void write(const std::string& name, const std::string& content) {
    fs::create_directories(opt.out);
    const fs::path p = out_path(name);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw cr::DataError("cannot write '" + p.string() + "'");
    os << content;
    if (!os) throw cr::DataError("failed writing '" + p.string() + "'");
    outputs.push_back(name);
    log(LogLevel::Info, "wrote " + p.string());
  }

  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }

  void write_manifest(int exit_code, const std::string& error, double seconds) const {
    Json m{{"tool", "causal_reduce"},
           {"version", kVersion},
           {"command", command},
           {"mode", opt.mode.empty() ? Json(nullptr) : Json(opt.mode)},
           {"config", config},
           {"seed", opt.seed},
           {"jobs", opt.jobs},
           {"inputs", inputs},
           {"outputs", outputs},
           {"exit_code", exit_code},
           {"error", error.empty() ? Json(nullptr) : Json(error)},
           {"wall_clock_seconds", seconds}};
    std::error_code ec;
    fs::create_directories(opt.out, ec);
    std::ofstream os(out_path("manifest.json"), std::ios::binary);
    if (os) os << m.dump(2) << "\n";
    else log(LogLevel::Error, "cannot write manifest in '" + opt.out + "'");
  }
};

std::string csv_double(double v) { return std::isfinite(v) ? cr::format_double(v) : "nan"; }

// ---------------------------------------------------------------------------
// Data adapters

std::size_t category(double v, const char* what, std::size_t line) {
  if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(cr::discrete::kMaxCardinality))
    throw cr::DataError("line " + std::to_string(line) + ": " + what +
                        " must be a small non-negative integer for discrete fitting");
  return static_cast<std::size_t>(v);
}

/// Counts from a dataset CSV (all splits) or a {"n_obs", "n_int"} JSON file.
cr::discrete::CountTables read_counts(Run& run, const Json& cfg) {
  const std::string& path = run.opt.data;
  if (path.empty()) throw cr::UsageError("--data is required");
  if (fs::path(path).extension() == ".json") {
    const Json j = run.read_json(path, false);
    try {
      return cr::io::counts_from_json(j);
    } catch (const cr::UsageError& e) {
      throw cr::DataError(e.what());
    }
  }
  const cr::RegimeDataset d = run.read_dataset(path);
  std::size_t nx = 0, ny = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    nx = std::max(nx, category(d.rows()[i].x, "x", i + 2) + 1);
    ny = std::max(ny, category(d.rows()[i].y, "y", i + 2) + 1);
  }
  cr::io::detail::read_opt(cfg, "card_x", nx, "config");
  cr::io::detail::read_opt(cfg, "card_y", ny, "config");
  Eigen::MatrixXd n_obs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(std::max<std::size_t>(nx, 2)),
                                                static_cast<Eigen::Index>(std::max<std::size_t>(ny, 2)));
  Eigen::MatrixXd n_int = n_obs;
  for (const auto& row : d.rows()) {
    const auto x = static_cast<Eigen::Index>(row.x), y = static_cast<Eigen::Index>(row.y);
    if (x >= n_obs.rows() || y >= n_obs.cols()) throw cr::DataError("value exceeds the configured cardinality");
    (row.regime == cr::Regime::Observational ? n_obs : n_int)(x, y) += 1.0;
  }
  return cr::discrete::CountTables(n_obs, n_int);
}

cr::flow::TrainingData training_data(const cr::RegimeDataset& d) {
  using cr::Regime;
  using cr::Split;
  using cr::flow::SampleBatch;
  return {SampleBatch::from(d.select(Regime::Observational, Split::Train)),
          SampleBatch::from(d.select(Regime::Observational, Split::Validation)),
          SampleBatch::from(d.select(Regime::Interventional, Split::Train)),
          SampleBatch::from(d.select(Regime::Interventional, Split::Validation))};
}

cr::flow::TrainMode parse_flow_mode(const std::string& m) {
  if (m == "flow-obs" || m == "obs") return cr::flow::TrainMode::ObservationalOnly;
  if (m == "flow-int" || m == "int") return cr::flow::TrainMode::InterventionalOnly;
  if (m == "flow-joint" || m == "joint") return cr::flow::TrainMode::Joint;
  throw cr::UsageError("unknown flow mode '" + m + "' (expected obs, int or joint)");
}

// ---------------------------------------------------------------------------
// Commands

void cmd_simulate(Run& run) {
  if (run.opt.config.empty()) throw cr::UsageError("simulate needs --config");
  auto cfg = cr::io::sim_config_from_json(run.config_json());
  if (run.seed_given) cfg.seed = run.opt.seed;
  run.opt.seed = cfg.seed;
  run.config = cr::io::to_json(cfg);
  log(LogLevel::Info, "simulating " + std::to_string(cfg.obs_splits.total() + cfg.int_splits.total()) + " rows");
  const auto s = cr::sim::simulate(cfg);
  std::ostringstream csv;
  cr::write_csv(s.data, csv);
  Json side = cr::io::sidecar(s);
  side["dataset"] = "dataset.csv";
  side["overlap_score"] = cr::sim::overlap_score(s.data);
  run.write("dataset.csv", csv.str());
  run.write_json("dataset.json", side);
}

void cmd_reduce(Run& run) {
  if (run.opt.model.empty()) throw cr::UsageError("reduce needs --model");
  const Json j = run.read_json(run.opt.model, false);
  const auto cbn = [&] {
    try {
      return cr::io::cbn_from_json(j);
    } catch (const cr::UsageError& e) {
      throw cr::DataError(e.what());
    }
  }();
  const auto red = cr::discrete::reduce(cbn);
  const double obs_gap =
      (cr::discrete::observational_joint(cbn) - cr::discrete::observational_joint(red)).cwiseAbs().maxCoeff();
  const double int_gap =
      (cr::discrete::interventional_kernel(cbn) - cr::discrete::interventional_kernel(red)).cwiseAbs().maxCoeff();
  run.write_json("reduced.json", cr::io::to_json(red));
  run.write_json("reduce_report.json", Json{{"card_z", cbn.card_z()},
                                            {"card_w", red.card_x()},
                                            {"max_observational_gap", obs_gap},
                                            {"max_interventional_gap", int_gap}});
}

Json discrete_fit_json(const cr::discrete::CountTables& counts, const Json& cfg) {
  cr::io::detail::reject_unknown(cfg, {"card_x", "card_y", "max_iterations", "tolerance"}, "config");
  cr::discrete::OptimizerConfig oc;
  cr::io::detail::read_opt(cfg, "max_iterations", oc.max_iterations, "config");
  cr::io::detail::read_opt(cfg, "tolerance", oc.tolerance, "config");
  const auto mle = cr::discrete::fit_exact_mle(counts, oc);
  const auto obs = cr::discrete::fit_observational(counts);
  const auto clip = cr::discrete::clipped_psi(obs.phi, obs.theta, counts);
  cr::discrete::DiscreteParams clipped{obs.phi, obs.theta, clip.psi};
  Json flags = Json::array();
  for (bool b : clip.clipped) flags.push_back(b);
  Json out{{"counts", cr::io::to_json(counts)},
           {"exact_mle",
            Json{{"params", cr::io::to_json(mle.params)},
                 {"log_likelihood", mle.log_likelihood},
                 {"iterations", mle.iterations},
                 {"converged", mle.converged},
                 {"constraint_violation", cr::discrete::constraint_violation(mle.params)}}},
           {"clipped",
            Json{{"params", cr::io::to_json(clipped)},
                 {"log_likelihood", cr::discrete::joint_log_likelihood(clipped, counts)},
                 {"clipped_entries", flags}}}};
  if (counts.card_x() == 2 && counts.card_y() == 2) {
    Json ate{{"exact_mle", cr::discrete::ate(mle.params.psi)}, {"clipped", cr::discrete::ate(clip.psi)}};
    if (counts.int_arm_total(0) > 0 && counts.int_arm_total(1) > 0)
      ate["interventional_only"] = cr::discrete::ate_interventional_only(counts);
    out["ate"] = ate;
  }
  return out;
}

void fit_discrete(Run& run) {
  const Json cfg = run.config_json();
  run.config = cfg;
  const auto counts = read_counts(run, cfg);
  run.write_json("discrete_fit.json", discrete_fit_json(counts, cfg));
}

void fit_linear(Run& run) {
  const Json cfg = run.config_json();
  cr::io::detail::reject_unknown(cfg, {"max_iterations", "gradient_tolerance", "split"}, "config");
  cr::linear::LinearFitConfig lc;
  cr::io::detail::read_opt(cfg, "max_iterations", lc.max_iterations, "config");
  cr::io::detail::read_opt(cfg, "gradient_tolerance", lc.gradient_tolerance, "config");
  std::string split = "train";
  cr::io::detail::read_opt(cfg, "split", split, "config");
  run.config = Json{{"max_iterations", lc.max_iterations}, {"gradient_tolerance", lc.gradient_tolerance}, {"split", split}};
  const auto d = run.read_dataset(run.opt.data);
  const cr::Split s = cr::parse_split(split);
  const auto obs = d.select(cr::Regime::Observational, s), intv = d.select(cr::Regime::Interventional, s);
  cr::linear::LinearRegimeData data{obs.x.transpose(), obs.y.transpose(), intv.x.transpose(), intv.y.transpose()};
  const auto fit = cr::linear::fit_constrained(data, lc);
  run.write_json("linear_model.json", cr::io::to_json(fit.scm));
  run.write_json("linear_fit.json", Json{{"n_obs", obs.size()},
                                         {"n_int", intv.size()},
                                         {"log_likelihood", fit.log_likelihood},
                                         {"iterations", fit.iterations},
                                         {"converged", fit.converged},
                                         {"params", cr::io::to_json(fit.params)},
                                         {"constraints", cr::io::to_json(fit.constraints)}});
  if (!fit.converged) log(LogLevel::Warn, "linear fit stopped before meeting the gradient tolerance");
}

void fit_flow(Run& run, cr::flow::TrainMode mode) {
  auto cfg = cr::io::train_config_from_json(run.config_json());
  if (run.seed_given) cfg.seed = run.opt.seed;
  run.opt.seed = cfg.seed;
  const auto d = run.read_dataset(run.opt.data);
  cfg.flow.confounders = static_cast<Eigen::Index>(d.confounders());
  run.config = cr::io::to_json(cfg);
  log(LogLevel::Info, std::string("training ") + cr::flow::to_string(mode) + " flow");
  const auto result = cr::flow::train(training_data(d), cfg, mode);
  run.write_json("training.json", cr::io::to_json(result, mode));
  if (result.diverged) throw cr::NumericalError("training diverged: " + result.divergence_message);
  run.write_json("checkpoint.json", cr::io::to_json(result.model));
  // Test NLL on the default evaluation grid, which is finer than a typical training grid.
  if (d.count(cr::Regime::Observational, cr::Split::Test) + d.count(cr::Regime::Interventional, cr::Split::Test)) {
    const cr::flow::IntegrationGrid eval_grid;
    Json report = cr::io::to_json(cr::flow::evaluate(result.model, d, cr::Split::Test, eval_grid));
    report["grid"] = cr::io::to_json(eval_grid);
    run.write_json("evaluation.json", report);
  }
}

void cmd_fit(Run& run) {
  const std::string& m = run.opt.mode;
  if (m == "discrete") return fit_discrete(run);
  if (m == "linear") return fit_linear(run);
  if (m.rfind("flow-", 0) == 0) return fit_flow(run, parse_flow_mode(m));
  throw cr::UsageError("--mode must be one of discrete, linear, flow-obs, flow-int, flow-joint");
}

cr::flow::ReducedFlowModel load_flow(Run& run) {
  if (run.opt.model.empty()) throw cr::UsageError("--model is required");
  const Json j = run.read_json(run.opt.model, false);
  try {
    return cr::io::flow_model_from_json(j);
  } catch (const cr::UsageError& e) {
    throw cr::DataError(e.what());
  }
}

void cmd_eval_flow(Run& run) {
  const Json cfg = run.config_json();
  const auto grid = cr::io::grid_from_json(cfg.value("grid", Json::object()), "config.grid");
  run.config = Json{{"grid", cr::io::to_json(grid)}, {"split", run.opt.split}};
  const auto model = load_flow(run);
  const auto d = run.read_dataset(run.opt.data);
  Json report = cr::io::to_json(cr::flow::evaluate(model, d, cr::parse_split(run.opt.split), grid));
  report["grid"] = cr::io::to_json(grid);
  run.write_json("evaluation.json", report);
}

void cmd_sample_flow(Run& run) {
  run.config = Json{{"split", run.opt.split}, {"regime", run.opt.regime}};
  const auto model = load_flow(run);
  const auto d = run.read_dataset(run.opt.data);
  const cr::Split split = cr::parse_split(run.opt.split);
  const bool force = !run.opt.regime.empty();
  const cr::Regime forced = force ? cr::parse_regime(run.opt.regime) : cr::Regime::Observational;
  cr::RegimeDataset out(d.confounders());
  std::size_t i = 0;
  for (const auto& row : d.rows()) {
    if (row.split != split) continue;
    cr::RegimeRow r = row;
    if (force) r.regime = forced;
    cr::Rng rng = cr::make_rng(cr::derive_seed(run.opt.seed, i++));
    const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(r.c.data(), static_cast<Eigen::Index>(r.c.size()));
    r.y = r.regime == cr::Regime::Observational ? cr::flow::sample_observational(model, r.x, rng, c)
                                                : cr::flow::sample_interventional(model, r.x, rng, c);
    out.add(std::move(r));
  }
  if (out.size() == 0) throw cr::DataError("no rows in split '" + run.opt.split + "'");
  std::ostringstream csv;
  cr::write_csv(out, csv);
  run.write("samples.csv", csv.str());
}

void cmd_bounds(Run& run) {
  const Json cfg = run.config_json();
  run.config = cfg;
  const auto counts = read_counts(run, cfg);
  if (counts.obs_total() <= 0) throw cr::DataError("bounds need observational samples");
  const Eigen::MatrixXd joint = counts.n_obs() / counts.obs_total();
  const auto b = cr::discrete::bounds(joint);
  std::ostringstream csv;
  csv << "x,y,p_x,p_xy,lower,upper,int_empirical,contained\n";
  Json rows = Json::array();
  for (Eigen::Index x = 0; x < joint.rows(); ++x) {
    const double arm = counts.n_int().row(x).sum();
    for (Eigen::Index y = 0; y < joint.cols(); ++y) {
      const double emp = arm > 0 ? counts.n_int()(x, y) / arm : std::numeric_limits<double>::quiet_NaN();
      const bool has = arm > 0;
      const bool inside = has && emp >= b.lower(x, y) && emp <= b.upper(x, y);
      csv << x << ',' << y << ',' << csv_double(joint.row(x).sum()) << ',' << csv_double(joint(x, y)) << ','
          << csv_double(b.lower(x, y)) << ',' << csv_double(b.upper(x, y)) << ',' << csv_double(emp) << ','
          << (has ? (inside ? "1" : "0") : "") << '\n';
    }
  }
  run.write("bounds.csv", csv.str());
  run.write_json("bounds.json", Json{{"counts", cr::io::to_json(counts)}, {"bounds", cr::io::to_json(b)}});
}

void cmd_benchmark(Run& run) {
  if (run.opt.data.empty()) throw cr::UsageError("benchmark-ratio needs --data <directory of dataset CSVs>");
  auto cfg = cr::io::ratio_config_from_json(run.config_json());
  if (run.seed_given) cfg.train.seed = run.opt.seed;
  run.opt.seed = cfg.train.seed;
  cfg.jobs = run.opt.jobs;
  std::vector<std::string> files;
  if (!fs::is_directory(run.opt.data)) throw cr::DataError("'" + run.opt.data + "' is not a directory");
  for (const auto& e : fs::directory_iterator(run.opt.data))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw cr::DataError("no dataset CSVs in '" + run.opt.data + "'");
  std::vector<cr::RegimeDataset> all;
  for (const auto& f : files) all.push_back(run.read_dataset(f));

  Json selection = Json::array();
  std::vector<cr::RegimeDataset> used;
  std::vector<std::string> names;
  if (run.opt.select) {
    std::vector<double> scores;
    for (const auto& d : all) scores.push_back(cr::sim::overlap_score(d));
    for (std::size_t i : cr::sim::select_confounded(scores, run.opt.select)) {
      used.push_back(all[i]);
      names.push_back(fs::path(files[i]).filename().string());
      selection.push_back(Json{{"file", names.back()}, {"overlap_score", scores[i]}});
    }
  } else {
    used = all;
    for (const auto& f : files) names.push_back(fs::path(f).filename().string());
  }
  run.config = cr::io::to_json(cfg);
  run.config["select"] = run.opt.select;
  log(LogLevel::Info, "benchmarking " + std::to_string(used.size()) + " datasets");
  const auto r = cr::flow::ratio_benchmark(used, cfg);

  std::ostringstream ratio, curves;
  ratio << "dataset,n_int,joint_int_nll,n_star,ratio,bound\n";
  for (const auto& e : r.entries)
    ratio << names[e.dataset] << ',' << e.n_int << ',' << csv_double(e.joint_int_nll) << ',' << csv_double(e.n_star)
          << ',' << csv_double(e.ratio) << ',' << cr::flow::to_string(e.bound) << '\n';
  curves << "dataset,n_int,int_nll\n";
  for (const auto& c : r.curves) curves << names[c.dataset] << ',' << c.n_int << ',' << csv_double(c.int_nll) << '\n';
  run.write("ratio.csv", ratio.str());
  run.write("curves.csv", curves.str());
  if (run.opt.select) run.write_json("selection.json", selection);
}

void cmd_case_study(Run& run) {
  if (run.opt.config.empty()) throw cr::UsageError("case-study needs --config");
  const Json j = run.config_json();
  const std::string w = "config";
  cr::io::detail::reject_unknown(
      j, {"model", "n_obs", "combined_arms", "interventional_arms", "replications", "seed", "exact_mle"}, w);
  cr::discrete::CaseStudyConfig cfg(cr::io::cbn_from_json(cr::io::detail::field(j, "model", w)));
  cr::io::detail::read_opt(j, "n_obs", cfg.n_obs, w);
  cr::io::detail::read_opt(j, "replications", cfg.replications, w);
  cr::io::detail::read_opt(j, "seed", cfg.seed, w);
  cr::io::detail::read_opt(j, "exact_mle", cfg.exact_mle, w);
  auto arms = [&](const char* key) {
    const std::string aw = w + "." + key;
    const Json& a = cr::io::detail::field(j, key, w);
    cr::io::detail::reject_unknown(a, {"untreated", "treated"}, aw);
    return cr::discrete::ArmAllocation{cr::io::detail::read_req<std::size_t>(a, "untreated", aw),
                                       cr::io::detail::read_req<std::size_t>(a, "treated", aw)};
  };
  cfg.combined_arms = arms("combined_arms");
  cfg.interventional_arms = arms("interventional_arms");
  if (run.seed_given) cfg.seed = run.opt.seed;
  run.opt.seed = cfg.seed;
  cfg.jobs = run.opt.jobs;
  Json snapshot = j;
  snapshot["seed"] = cfg.seed;
  run.config = snapshot;
  const auto report = cr::discrete::rct_case_study(cfg);
  Json out = cr::io::to_json(report);
  const double mse_i = report.interventional_only.mse, mse_io = report.combined.mse;
  out["mse_ratio_combined_over_interventional"] = cr::io::double_value(mse_io / mse_i);
  run.write_json("case_study.json", out);
}

// ---------------------------------------------------------------------------

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const cr::UsageError*>(&e)) return kUsage;
  if (dynamic_cast<const cr::NumericalError*>(&e)) return kNumerical;
  if (dynamic_cast<const Json::exception*>(&e)) return kUsage;
  return kData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal reduction estimators for combined observational and interventional data"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Run run;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", run.opt.config, "JSON configuration file");
    sub->add_option("--seed", run.opt.seed, "Random seed (overrides the configuration)")
        ->each([&](const std::string&) { run.seed_given = true; });
    sub->add_option("--out", run.opt.out, "Output directory")->capture_default_str();
    sub->add_option("--jobs", run.opt.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  };
  struct Command {
    CLI::App* app;
    std::function<void(Run&)> body;
  };
  std::vector<Command> commands;
  auto add = [&](const char* name, const char* help, std::function<void(Run&)> body) {
    CLI::App* sub = app.add_subcommand(name, help);
    common(sub);
    commands.push_back({sub, std::move(body)});
    return sub;
  };

  add("simulate", "Simulate a confounded dataset from a JSON configuration", cmd_simulate);
  add("reduce", "Reduce a discrete causal model to its treatment-space confounder", cmd_reduce)
      ->add_option("--model", run.opt.model, "Model JSON (type cbn)");
  auto* fit = add("fit", "Fit a reduced model", cmd_fit);
  fit->add_option("--mode", run.opt.mode, "discrete, linear, flow-obs, flow-int or flow-joint")->required();
  fit->add_option("--data", run.opt.data, "Dataset CSV (or counts JSON for discrete)")->required();
  add("fit-linear", "Fit the constrained linear-Gaussian model", fit_linear)
      ->add_option("--data", run.opt.data, "Dataset CSV")
      ->required();
  auto* fit_flow_cmd = add("fit-flow", "Fit a reduced flow model", [](Run& r) { fit_flow(r, parse_flow_mode(r.opt.mode)); });
  fit_flow_cmd->add_option("--mode", run.opt.mode, "obs, int or joint")->required();
  fit_flow_cmd->add_option("--data", run.opt.data, "Dataset CSV")->required();
  auto* eval = add("eval-flow", "Evaluate a flow checkpoint", cmd_eval_flow);
  eval->add_option("--model", run.opt.model, "Checkpoint JSON")->required();
  eval->add_option("--data", run.opt.data, "Dataset CSV")->required();
  eval->add_option("--split", run.opt.split, "Split to evaluate")->capture_default_str();
  auto* sample = add("sample-flow", "Draw y for each row of a dataset split", cmd_sample_flow);
  sample->add_option("--model", run.opt.model, "Checkpoint JSON")->required();
  sample->add_option("--data", run.opt.data, "Dataset CSV supplying x (and c)")->required();
  sample->add_option("--split", run.opt.split, "Split to use")->capture_default_str();
  sample->add_option("--regime", run.opt.regime, "Force obs or int sampling for every row");
  add("bounds", "Interval bounds on p(y | do(x)) from observational counts", cmd_bounds)
      ->add_option("--data", run.opt.data, "Dataset CSV or counts JSON")
      ->required();
  auto* bench = add("benchmark-ratio", "Sample-efficiency ratio of joint versus interventional-only flows", cmd_benchmark);
  bench->add_option("--data", run.opt.data, "Directory of dataset CSVs")->required();
  bench->add_option("--select", run.opt.select, "Keep the k datasets with the lowest overlap score");
  add("case-study", "Monte Carlo comparison of the binary ATE estimators", cmd_case_study);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  int code = kOk;
  std::string error;
  for (const auto& c : commands) {
    if (!c.app->parsed()) continue;
    run.command = c.app->get_name();
    try {
      c.body(run);
    } catch (const std::exception& e) {
      code = exit_code_for(e);
      error = e.what();
      log(LogLevel::Error, error);
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.write_manifest(code, error, seconds);
  return code;
}
