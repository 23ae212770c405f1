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

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pstmle/dataset.hpp"
#include "pstmle/estimators.hpp"
#include "pstmle/truncation.hpp"

namespace pstmle {

// Synthetic observational design with controllable practical-positivity
// violations. Covariates are exchangeable multivariate normal; treatment
// assignment is logistic in the covariates shifted by the constant c, so
// larger c pushes treated propensities toward 1; the outcome is linear
// with additive treatment effect and unit Gaussian noise.
struct DgpConfig {
  double c = 0.0;
  Eigen::Index n = 1000;
  double rho = 0.1;
  std::uint64_t seed = 1;
  // First covariate index (1-based) of the 3/20-weighted tail block in the
  // treatment model; 3 keeps W1/W2 at unit weight, 2 double-counts W2.
  int sum_from = 3;
  double treatment_effect = 2.0;

  static constexpr Eigen::Index kNumCovariates = 20;

  void validate() const;
};

// Draws replication `replication` of the configured design. Replications
// are independent streams of the same seed, so any subset can be generated
// in any order with identical results.
Dataset sample_dataset(const DgpConfig& config, std::uint64_t replication);

// Assignment probabilities of the sampled units under the true model.
Eigen::VectorXd true_propensity(const DgpConfig& config, const Dataset& data);

double true_ate(const DgpConfig& config);

enum class EstimatorKind { kIpw, kHajek, kAipw, kTmle };
enum class SelectorKind { kFixed, kCv, kMv, kCtmle };

// A column of the simulation report: an ATE estimator combined with a
// truncation-level selector. Canonical string form:
//   [true-ps:]<ipw|hajek|aipw|tmle>:<fixed:G|cv|mv|ctmle>
// e.g. "tmle:ctmle", "ipw:fixed:0.90", "true-ps:tmle:cv". The mv and ctmle
// selectors require the tmle estimator.
struct Method {
  EstimatorKind estimator = EstimatorKind::kTmle;
  SelectorKind selector = SelectorKind::kFixed;
  double fixed_gamma = 1.0;
  bool use_true_ps = false;

  std::string label() const;
  static Method parse(const std::string& text);
};

struct ReplicateOutcome {
  bool ok = false;
  double psi = 0.0;
  double se = 0.0;
  double gamma = 0.0;
  bool covered = false;  // 95% influence-curve interval contains the truth
  std::string error;
};

struct MethodSummary {
  std::string method;
  double bias = 0.0;
  double se = 0.0;        // sample SD of the estimates (divisor R - 1)
  double mse = 0.0;       // mean squared error about the true ATE
  double coverage = 0.0;  // estimated-SE interval coverage
  double mean_gamma = 0.0;
  double mean_se_hat = 0.0;
  int replications = 0;  // successful replications
  int failures = 0;
  std::optional<double> true_se;  // Monte Carlo SD, when requested
  std::optional<double> true_se_coverage;
  std::vector<ReplicateOutcome> replicates;  // kept on request
};

struct SimulationReport {
  DgpConfig config;
  int total_replications = 0;
  std::vector<MethodSummary> methods;

  // True when any method failed on more than 5% of replications.
  bool exceeds_failure_threshold() const;
};

struct HarnessConfig {
  TruncationGrid grid = make_grid();
  int cv_folds = 5;
  int mv_repeats = 10;
  int jobs = 1;
  bool keep_replicates = false;
  // Outcome-model columns (0-based into W): W3..W10 of the 20-covariate
  // design, deliberately omitting the confounders W1 and W2.
  std::vector<int> outcome_columns = {2, 3, 4, 5, 6, 7, 8, 9};
};

// Runs R independent replications of every method and aggregates bias,
// sample SD, MSE, and interval coverage against the true ATE. Results are
// byte-identical for any `jobs` value: replication r always uses stream r
// and aggregation runs in replication order.
SimulationReport run_replications(const DgpConfig& config,
                                  const std::vector<Method>& methods, int R,
                                  const HarnessConfig& harness = {});

// Sample SD over at least 1000 fresh replications (streams offset by
// kTrueSeStreamOffset so they never overlap a report's streams).
double monte_carlo_true_se(const DgpConfig& config, const Method& method,
                           int r_large, const HarnessConfig& harness = {});

// Same, for an arbitrary point estimator of each sampled dataset.
double monte_carlo_true_se(
    const DgpConfig& config,
    const std::function<double(const Dataset&)>& point_estimator, int r_large,
    int jobs = 1);

inline constexpr std::uint64_t kTrueSeStreamOffset = 1000000;

// Fills true_se and true_se_coverage for every method of a report that was
// produced with keep_replicates = true: the true SE comes from a separate
// Monte Carlo run of r_large replications and the starred coverage counts
// replicates with |psi - truth| <= 1.96 * true_se.
void attach_true_se(SimulationReport& report,
                    const std::vector<Method>& methods, int r_large,
                    const HarnessConfig& harness = {});

struct SweepRow {
  std::string estimator;
  double gamma = 0.0;
  double bias = 0.0;
  double se = 0.0;
  double mse = 0.0;
  int replications = 0;
};

// Fixed-truncation bias/SD/MSE profile over the whole grid for each
// estimator, from one shared set of R replications. Rows are ordered by
// estimator (input order), then gamma ascending.
std::vector<SweepRow> run_sweep(const DgpConfig& config,
                                const std::vector<EstimatorKind>& estimators,
                                const TruncationGrid& grid, int R,
                                const HarnessConfig& harness = {});

double sample_sd(const std::vector<double>& values);

}  // namespace pstmle
