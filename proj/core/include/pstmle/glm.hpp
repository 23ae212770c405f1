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

#include <cmath>

#include <Eigen/Dense>

namespace pstmle {

// Predictions from predict_proba() are clamped to
// [kProbabilityFloor, 1 - kProbabilityFloor].
inline constexpr double kProbabilityFloor = 1e-8;

// Search bound for the one-dimensional fluctuation parameter.
inline constexpr double kEpsilonBound = 30.0;

inline constexpr int kMaxIrlsIterations = 100;
inline constexpr double kDevianceTolerance = 1e-8;

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Dense design matrix. Construction validates that every entry is finite;
// the intercept column, when requested, is prepended as column 0.
class DesignMatrix {
 public:
  static DesignMatrix with_intercept(const Eigen::MatrixXd& predictors);
  static DesignMatrix plain(Eigen::MatrixXd values);

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  const Eigen::MatrixXd& values() const { return values_; }
  bool has_intercept() const { return has_intercept_; }

 private:
  DesignMatrix(Eigen::MatrixXd values, bool has_intercept);

  Eigen::MatrixXd values_;
  bool has_intercept_;
};

struct LogisticFit {
  Eigen::VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
  double final_deviance = 0.0;  // unpenalized, -2 * log-likelihood
};

struct LinearFit {
  Eigen::VectorXd coefficients;
};

// Newton/IRLS logistic regression with step halving on the penalized
// deviance -2*loglik + ridge*|beta|^2. The intercept is penalized like any
// other coefficient. ridge = 0 requires a full-rank design with rows >=
// cols; a positive ridge also rescues separated data.
LogisticFit fit_logistic(const DesignMatrix& x, const Eigen::VectorXd& y,
                         double ridge = 0.0);

// Least squares via column-pivoted QR. Rank deficiency is an error rather
// than a minimum-norm solution.
LinearFit fit_ols(const DesignMatrix& x, const Eigen::VectorXd& y);

Eigen::VectorXd predict_proba(const LogisticFit& fit, const DesignMatrix& x);
Eigen::VectorXd predict_linear(const LinearFit& fit, const DesignMatrix& x);

// Solves the one-dimensional score equation
//   sum_i h_i * (y_i - expit(offset_i + epsilon * h_i)) = 0
// for epsilon, to |score| <= 1e-8 * n. The score is strictly decreasing in
// epsilon, so the root is bracketed by doubling and polished with
// safeguarded Newton steps. If the score only saturates (never crosses
// zero) the solver returns the first point within [-kEpsilonBound,
// kEpsilonBound] whose score meets the tolerance, and throws
// ConvergenceError if no such point exists.
double fit_offset_logistic(const Eigen::VectorXd& offset,
                           const Eigen::VectorXd& h, const Eigen::VectorXd& y);

}  // namespace pstmle
