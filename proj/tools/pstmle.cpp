// Copyright 2026 The pstmle Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: estimate an ATE from a CSV file, run a seeded
// simulation study, or sweep fixed truncation levels.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pstmle/dataset.hpp"
#include "pstmle/errors.hpp"
#include "pstmle/estimators.hpp"
#include "pstmle/glm.hpp"
#include "pstmle/reporting.hpp"
#include "pstmle/selectors.hpp"
#include "pstmle/simulation.hpp"
#include "pstmle/truncation.hpp"

namespace {

using pstmle::AteEstimate;
using pstmle::Dataset;
using pstmle::DgpConfig;
using pstmle::EstimatorKind;
using pstmle::HarnessConfig;
using pstmle::Method;
using pstmle::SelectorKind;
using pstmle::TruncationGrid;

struct GridFlags {
  double gamma_min = 0.60;
  double gamma_max = 1.00;
  double step = 0.01;
};

void add_grid_flags(CLI::App* cmd, GridFlags* flags) {
  cmd->add_option("--gamma-min", flags->gamma_min,
                  "Smallest truncation level (default 0.60)");
  cmd->add_option("--gamma-max", flags->gamma_max,
                  "Largest truncation level (default 1.00)");
  cmd->add_option("--gamma-step", flags->step,
                  "Grid spacing (default 0.01)");
}

TruncationGrid build_grid(const GridFlags& flags) {
  if (flags.gamma_min == flags.gamma_max) {
    TruncationGrid grid;
    grid.gammas = {flags.gamma_min};
    grid.gamma_min = flags.gamma_min;
    grid.gamma_max = flags.gamma_max;
    grid.step = flags.step;
    return grid;
  }
  return pstmle::make_grid(flags.gamma_min, flags.gamma_max, flags.step);
}

void write_output(const std::optional<std::string>& path,
                  const std::string& content) {
  if (!path) {
    std::cout << content;
    return;
  }
  std::ofstream out(*path);
  if (!out) throw pstmle::Error("cannot open '" + *path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw pstmle::Error("failed writing '" + *path + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

// --known-ps accepts either a constant probability or a path to a text
// file with one probability per row (matching the dataset's row order).
Eigen::VectorXd resolve_known_ps(const std::string& spec, Eigen::Index n) {
  try {
    std::size_t consumed = 0;
    const double value = std::stod(spec, &consumed);
    if (consumed == spec.size()) {
      if (!(value > 0.0 && value < 1.0)) {
        throw pstmle::DomainError("--known-ps constant must be in (0, 1)");
      }
      return Eigen::VectorXd::Constant(n, value);
    }
  } catch (const std::invalid_argument&) {
    // fall through to the file branch
  } catch (const std::out_of_range&) {
    throw pstmle::DomainError("--known-ps constant out of range");
  }
  std::ifstream in(spec);
  if (!in) {
    throw pstmle::Error("--known-ps: cannot open file '" + spec + "'");
  }
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    values.push_back(std::stod(line));
  }
  if (static_cast<Eigen::Index>(values.size()) != n) {
    throw pstmle::ShapeError("--known-ps file has " +
                             std::to_string(values.size()) + " rows, need " +
                             std::to_string(n));
  }
  Eigen::VectorXd ps(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ps[i] = values[static_cast<std::size_t>(i)];
  }
  if ((ps.array() <= 0.0).any() || (ps.array() >= 1.0).any()) {
    throw pstmle::DomainError("--known-ps values must lie in (0, 1)");
  }
  return ps;
}

std::vector<int> resolve_outcome_columns(const std::string& spec,
                                         Eigen::Index p) {
  std::vector<int> columns;
  for (const std::string& item : split_list(spec)) {
    const int one_based = std::stoi(item);
    if (one_based < 1 || one_based > p) {
      throw pstmle::DomainError("--outcome-covariates: w" + item +
                                " is out of range");
    }
    columns.push_back(one_based - 1);
  }
  return columns;
}

int cmd_estimate(const std::string& input, const std::string& estimator_name,
                 const std::string& selector_name, const GridFlags& grid_flags,
                 int folds, int mv_repeats, const std::string& known_ps,
                 double ps_ridge, const std::string& outcome_covariates,
                 std::uint64_t seed, const std::optional<std::string>& out,
                 const std::string& format) {
  const Dataset data = pstmle::read_dataset_csv_file(input);

  const Method method = Method::parse(estimator_name + ":" + selector_name);
  const TruncationGrid grid = build_grid(grid_flags);

  Eigen::VectorXd ps;
  if (!known_ps.empty()) {
    ps = resolve_known_ps(known_ps, data.size());
  } else {
    const pstmle::DesignMatrix x = pstmle::DesignMatrix::with_intercept(data.w);
    ps = pstmle::predict_proba(pstmle::fit_logistic(x, data.a, ps_ridge), x);
  }

  std::vector<int> columns;
  if (!outcome_covariates.empty()) {
    columns = resolve_outcome_columns(outcome_covariates, data.num_covariates());
  }
  pstmle::SelectorConfig selector_config;
  selector_config.outcome_columns = columns;

  const bool needs_outcome = method.estimator == EstimatorKind::kAipw ||
                             method.estimator == EstimatorKind::kTmle;
  std::optional<pstmle::OutcomeFit> initial;
  if (needs_outcome) initial = pstmle::fit_initial_outcome(data, columns);

  AteEstimate estimate;
  double gamma = 0.0;
  switch (method.selector) {
    case SelectorKind::kFixed:
      gamma = method.fixed_gamma;
      break;
    case SelectorKind::kCv:
      gamma = pstmle::cv_select_gamma(data, grid, folds, seed, selector_config);
      break;
    case SelectorKind::kMv:
      gamma = pstmle::mv_select_gamma(data, grid, mv_repeats, seed,
                                      selector_config, &ps);
      break;
    case SelectorKind::kCtmle:
      break;  // handled below; ctmle produces its own estimate
  }

  if (method.selector == SelectorKind::kCtmle) {
    const pstmle::CtmleResult result = pstmle::ctmle_select(
        *initial, data, grid, folds, seed, &ps, selector_config);
    estimate = result.estimate;
  } else {
    const Eigen::VectorXd ps_truncated = pstmle::truncate_upper(ps, gamma);
    switch (method.estimator) {
      case EstimatorKind::kIpw:
        estimate = pstmle::ipw_estimate(data, ps_truncated);
        break;
      case EstimatorKind::kHajek:
        estimate = pstmle::hajek_estimate(data, ps_truncated);
        break;
      case EstimatorKind::kAipw:
        estimate = pstmle::aipw_estimate(data, ps_truncated, *initial);
        break;
      case EstimatorKind::kTmle:
        estimate = pstmle::tmle_estimate(data, ps_truncated, *initial).estimate;
        break;
    }
    estimate.gamma = gamma;
  }

  write_output(out, format == "csv" ? pstmle::ate_estimate_csv(estimate)
                                    : pstmle::ate_estimate_json(estimate));
  return 0;
}

int cmd_simulate(const DgpConfig& config, int R,
                 const std::string& method_list, const GridFlags& grid_flags,
                 int folds, int mv_repeats, int jobs, int true_se_reps,
                 bool keep_replicates, const std::string& dump_data,
                 const std::string& out_prefix, const std::string& format) {
  std::vector<Method> methods;
  for (const std::string& item : split_list(method_list)) {
    methods.push_back(Method::parse(item));
  }

  HarnessConfig harness;
  harness.grid = build_grid(grid_flags);
  harness.cv_folds = folds;
  harness.mv_repeats = mv_repeats;
  harness.jobs = jobs;
  harness.keep_replicates = keep_replicates || true_se_reps > 0;

  if (!dump_data.empty()) {
    pstmle::write_dataset_csv_file(dump_data, sample_dataset(config, 0));
  }

  pstmle::SimulationReport report =
      pstmle::run_replications(config, methods, R, harness);
  if (true_se_reps > 0) {
    pstmle::attach_true_se(report, methods, true_se_reps, harness);
  }

  const bool write_csv = format == "csv" || format == "both";
  const bool write_json = format == "json" || format == "both";
  if (write_csv) {
    write_output(out_prefix + ".csv", pstmle::simulation_report_csv(report));
  }
  if (write_json) {
    write_output(out_prefix + ".json",
                 pstmle::simulation_report_json(report, keep_replicates));
  }

  if (report.exceeds_failure_threshold()) {
    std::cerr << "error: a method failed on more than 5% of replications\n";
    for (const pstmle::MethodSummary& m : report.methods) {
      if (m.failures > 0.05 * report.total_replications) {
        std::cerr << "  " << m.method << ": " << m.failures << "/"
                  << report.total_replications << " failures\n";
      }
    }
    return 1;
  }
  return 0;
}

int cmd_sweep(const DgpConfig& config, int R, const std::string& estimator_list,
              const GridFlags& grid_flags, int jobs,
              const std::optional<std::string>& out) {
  std::vector<EstimatorKind> estimators;
  for (const std::string& item : split_list(estimator_list)) {
    if (item == "ipw") {
      estimators.push_back(EstimatorKind::kIpw);
    } else if (item == "hajek") {
      estimators.push_back(EstimatorKind::kHajek);
    } else if (item == "aipw") {
      estimators.push_back(EstimatorKind::kAipw);
    } else if (item == "tmle") {
      estimators.push_back(EstimatorKind::kTmle);
    } else {
      throw pstmle::DomainError("unknown estimator '" + item + "'");
    }
  }

  HarnessConfig harness;
  harness.jobs = jobs;
  const std::vector<pstmle::SweepRow> rows =
      pstmle::run_sweep(config, estimators, build_grid(grid_flags), R, harness);
  write_output(out, pstmle::sweep_csv(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Average treatment effect estimation with adaptive propensity-score "
      "truncation"};
  app.require_subcommand(1);

  // estimate
  auto* estimate = app.add_subcommand(
      "estimate", "Estimate the ATE from a y,a,w1,...,wp CSV file");
  std::string input;
  std::string estimator_name = "tmle";
  std::string selector_name = "fixed:1.0";
  GridFlags est_grid;
  int est_folds = 5;
  int est_mv_repeats = 10;
  std::string known_ps;
  double ps_ridge = 0.0;
  std::string outcome_covariates;
  std::uint64_t est_seed = 1;
  std::string est_out;
  std::string est_format = "json";
  estimate->add_option("--input", input, "Input CSV file")->required();
  estimate->add_option("--estimator", estimator_name,
                       "ipw, hajek, aipw, or tmle (default tmle)");
  estimate->add_option("--selector", selector_name,
                       "fixed:<gamma>, cv, mv, or ctmle (default fixed:1.0)");
  add_grid_flags(estimate, &est_grid);
  estimate->add_option("--folds", est_folds,
                       "Cross-validation folds (default 5)");
  estimate->add_option("--mv-repeats", est_mv_repeats,
                       "Half-splits for the mv selector (default 10)");
  estimate->add_option("--known-ps", known_ps,
                       "Known propensity score: constant or file path");
  estimate->add_option("--ps-ridge", ps_ridge,
                       "Ridge penalty for the fitted propensity model");
  estimate->add_option("--outcome-covariates", outcome_covariates,
                       "Comma-separated 1-based covariate indices for the "
                       "outcome model (default: all)");
  estimate->add_option("--seed", est_seed, "Selector seed (default 1)");
  estimate->add_option("--out", est_out, "Output path (default: stdout)");
  estimate->add_option("--format", est_format, "json or csv (default json)")
      ->check(CLI::IsMember({"json", "csv"}));
  int est_jobs = 1;
  estimate->add_option("--jobs", est_jobs,
                       "Accepted for interface symmetry; estimation of a "
                       "single dataset is serial")
      ->group("");

  // simulate
  auto* simulate = app.add_subcommand(
      "simulate", "Run a seeded replication study of the synthetic design");
  DgpConfig sim_config;
  int sim_R = 200;
  std::string method_list = "tmle:cv,tmle:mv,tmle:ctmle";
  GridFlags sim_grid;
  int sim_folds = 5;
  int sim_mv_repeats = 10;
  int sim_jobs = 1;
  int true_se_reps = 0;
  bool keep_replicates = false;
  std::string dump_data;
  std::string sim_out = "report";
  std::string sim_format = "both";
  simulate->add_option("--C", sim_config.c, "Positivity shift constant")
      ->required();
  simulate->add_option("--n", sim_config.n, "Sample size per replication")
      ->required();
  simulate->add_option("--R", sim_R, "Number of replications")->required();
  simulate->add_option("--seed", sim_config.seed, "Master seed (default 1)");
  simulate->add_option("--rho", sim_config.rho,
                       "Covariate correlation (default 0.1)");
  simulate->add_option("--sum-from", sim_config.sum_from,
                       "First covariate of the 3/20 block: 3 (default) or 2");
  simulate->add_option("--treatment-effect", sim_config.treatment_effect,
                       "Additive effect (default 2)");
  simulate->add_option("--methods", method_list,
                       "Comma-separated methods (default "
                       "tmle:cv,tmle:mv,tmle:ctmle)");
  add_grid_flags(simulate, &sim_grid);
  simulate->add_option("--folds", sim_folds,
                       "Cross-validation folds (default 5)");
  simulate->add_option("--mv-repeats", sim_mv_repeats,
                       "Half-splits for the mv selector (default 10)");
  simulate->add_option("--jobs", sim_jobs, "Worker threads (default 1)");
  simulate->add_option("--true-se", true_se_reps,
                       "Also report true-SE coverage from this many separate "
                       "replications (>= 1000)");
  simulate->add_flag("--keep-replicates", keep_replicates,
                     "Keep per-replication results in the JSON report");
  simulate->add_option("--dump-data", dump_data,
                       "Write replication 0's dataset to this CSV path");
  simulate->add_option("--out", sim_out,
                       "Output path prefix (default 'report')");
  simulate->add_option("--format", sim_format,
                       "csv, json, or both (default both)")
      ->check(CLI::IsMember({"csv", "json", "both"}));

  // sweep
  auto* sweep = app.add_subcommand(
      "sweep", "Bias/SD/MSE of fixed-truncation estimators over the grid");
  DgpConfig sweep_config;
  int sweep_R = 200;
  std::string estimator_list = "ipw,hajek,aipw,tmle";
  GridFlags sweep_grid;
  int sweep_jobs = 1;
  std::string sweep_out;
  sweep->add_option("--C", sweep_config.c, "Positivity shift constant")
      ->required();
  sweep->add_option("--n", sweep_config.n, "Sample size per replication")
      ->required();
  sweep->add_option("--R", sweep_R, "Number of replications")->required();
  sweep->add_option("--seed", sweep_config.seed, "Master seed (default 1)");
  sweep->add_option("--rho", sweep_config.rho,
                    "Covariate correlation (default 0.1)");
  sweep->add_option("--sum-from", sweep_config.sum_from,
                    "First covariate of the 3/20 block: 3 (default) or 2");
  sweep->add_option("--treatment-effect", sweep_config.treatment_effect,
                    "Additive effect (default 2)");
  sweep->add_option("--estimators", estimator_list,
                    "Comma-separated estimators (default all four)");
  add_grid_flags(sweep, &sweep_grid);
  sweep->add_option("--jobs", sweep_jobs, "Worker threads (default 1)");
  sweep->add_option("--out", sweep_out, "Output CSV path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (estimate->parsed()) {
      return cmd_estimate(input, estimator_name, selector_name, est_grid,
                          est_folds, est_mv_repeats, known_ps, ps_ridge,
                          outcome_covariates, est_seed,
                          est_out.empty() ? std::nullopt
                                          : std::optional<std::string>(est_out),
                          est_format);
    }
    if (simulate->parsed()) {
      return cmd_simulate(sim_config, sim_R, method_list, sim_grid, sim_folds,
                          sim_mv_repeats, sim_jobs, true_se_reps,
                          keep_replicates, dump_data, sim_out, sim_format);
    }
    if (sweep->parsed()) {
      return cmd_sweep(sweep_config, sweep_R, estimator_list, sweep_grid,
                       sweep_jobs,
                       sweep_out.empty()
                           ? std::nullopt
                           : std::optional<std::string>(sweep_out));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
