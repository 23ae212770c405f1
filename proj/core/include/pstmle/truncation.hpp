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

#include <vector>

#include <Eigen/Dense>

namespace pstmle {

// Strictly increasing candidate truncation levels. gamma_max is always the
// last grid value; when the requested maximum is 1 the grid ends at exactly
// 1.0 (no accumulated floating-point drift).
struct TruncationGrid {
  std::vector<double> gammas;
  double gamma_min = 0.0;
  double gamma_max = 0.0;
  double step = 0.0;

  std::size_t size() const { return gammas.size(); }
};

// Arithmetic grid gamma_min, gamma_min + step, ... with gamma_max appended
// as the exact final value. Defaults follow the estimator's standard search
// range: 0.60 to 1.00 in steps of 0.01 (41 levels).
TruncationGrid make_grid(double gamma_min = 0.60, double gamma_max = 1.00,
                         double step = 0.01);

// The ceil(gamma * n)-th order statistic (lower empirical quantile). The
// returned value is always an element of `values`.
double empirical_quantile(const Eigen::VectorXd& values, double gamma);

// One-sided upper truncation: caps the propensity scores at their own
// empirical gamma-quantile. Values below the cap are returned bit-exactly.
Eigen::VectorXd truncate_upper(const Eigen::VectorXd& ps, double gamma);

}  // namespace pstmle
