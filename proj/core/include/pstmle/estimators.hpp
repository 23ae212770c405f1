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

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pstmle/dataset.hpp"

namespace pstmle {

// Outcome-model predictions are kept inside [kOutcomeFloor,
// 1 - kOutcomeFloor] on the unit scale before they enter a logit.
inline constexpr double kOutcomeFloor = 1e-6;

// Affine map between the original outcome range [lower, upper] and the
// unit interval used by the logistic fluctuation.
struct OutcomeScaling {
  double lower = 0.0;
  double upper = 1.0;

  double range() const { return upper - lower; }
  double to_unit(double y) const { return (y - lower) / range(); }
  double to_original(double q) const { return lower + range() * q; }
  Eigen::VectorXd to_unit(const Eigen::VectorXd& y) const {
    return ((y.array() - lower) / range()).matrix();
  }
};

// Min-max scaling of the outcome to [0, 1]. Requires at least two values
// and a non-degenerate range.
std::pair<Eigen::VectorXd, OutcomeScaling> scale_outcome(
    const Eigen::VectorXd& y);

// Outcome regression on the unit scale: predictions at the observed
// treatment and at both counterfactual arms, plus the fluctuation history
// that produced them (empty for an initial fit).
struct OutcomeFit {
  Eigen::VectorXd q_observed;  // Q(A_i, W_i)
  Eigen::VectorXd q_treated;   // Q(1, W_i)
  Eigen::VectorXd q_control;   // Q(0, W_i)
  OutcomeScaling scaling;
  std::vector<double> epsilons;
};

// OLS of the scaled outcome on [1, A, W(columns)]; an empty column list
// means all covariates. Columns are 0-based indices into data.w.
// Predictions are clamped to [kOutcomeFloor, 1 - kOutcomeFloor].
OutcomeFit fit_initial_outcome(const Dataset& data,
                               const std::vector<int>& outcome_columns = {});

OutcomeFit subset_rows(const OutcomeFit& fit,
                       const std::vector<std::size_t>& indices);

// H(A, W) = A / g(W) - (1 - A) / (1 - g(W)).
Eigen::VectorXd clever_covariate(const Eigen::VectorXd& a,
                                 const Eigen::VectorXd& ps);

// Mean quasi-binomial negative log-likelihood
//   -mean(y * log(q) + (1 - y) * log(1 - q))
// on the unit scale; q is floored away from {0, 1} inside the logs only.
double quasibinomial_loss(const Eigen::VectorXd& y_scaled,
                          const Eigen::VectorXd& q);

// Point estimators of the average treatment effect.
double ipw(const Dataset& data, const Eigen::VectorXd& ps);
double hajek_ipw(const Dataset& data, const Eigen::VectorXd& ps);
double aipw(const Dataset& data, const Eigen::VectorXd& ps,
            const OutcomeFit& outcome);

struct AteEstimate {
  double psi = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::string method;
  std::optional<double> gamma;
  std::map<std::string, double> diagnostics;
};

// Solves the fluctuation score for epsilon, falling back to epsilon = 0
// whenever the solved value fails to lower the empirical loss (0 is always
// in the feasible set, so one targeting step never hurts the fit).
double fluctuation_epsilon(const Eigen::VectorXd& offset_logit,
                           const Eigen::VectorXd& h,
                           const Eigen::VectorXd& y_scaled);

// One targeting step: fluctuates `current` along the clever covariate for
// the given (already truncated) propensity scores and appends the solved
// epsilon to the history.
OutcomeFit fluctuate(const OutcomeFit& current, const Eigen::VectorXd& a,
                     const Eigen::VectorXd& ps,
                     const Eigen::VectorXd& y_scaled);

struct TmleResult {
  AteEstimate estimate;
  OutcomeFit targeted;
};

// Single-step TMLE of the ATE from an initial outcome fit and (possibly
// truncated) propensity scores. The estimate is reported on the original
// outcome scale with an influence-curve confidence interval.
TmleResult tmle_estimate(const Dataset& data, const Eigen::VectorXd& ps,
                         const OutcomeFit& initial);

// Efficient-influence-curve contributions for a targeted fit; their sample
// mean is ~0 once the score equation is solved.
Eigen::VectorXd influence_curve(const Dataset& data, const Eigen::VectorXd& ps,
                                const OutcomeFit& targeted, double psi);

struct IntervalScale {
  double se = 0.0;
  double lower_offset = 0.0;  // add to psi for the lower bound
  double upper_offset = 0.0;
};

// Influence-curve standard error sqrt(var(ic) / n) and symmetric normal
// interval offsets. level = 0.95 uses the conventional multiplier 1.96.
IntervalScale ic_confidence_interval(const Eigen::VectorXd& ic, double level);

// IPW-family estimates with influence-curve standard errors.
AteEstimate ipw_estimate(const Dataset& data, const Eigen::VectorXd& ps);
AteEstimate hajek_estimate(const Dataset& data, const Eigen::VectorXd& ps);
AteEstimate aipw_estimate(const Dataset& data, const Eigen::VectorXd& ps,
                          const OutcomeFit& outcome);

}  // namespace pstmle
