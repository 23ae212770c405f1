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

#include "pstmle/truncation.hpp"

#include <algorithm>
#include <cmath>

#include "pstmle/errors.hpp"

namespace pstmle {

TruncationGrid make_grid(double gamma_min, double gamma_max, double step) {
  if (!(gamma_min > 0.0 && gamma_min < gamma_max && gamma_max <= 1.0)) {
    throw DomainError("make_grid: need 0 < gamma_min < gamma_max <= 1");
  }
  if (!(step > 0.0)) throw DomainError("make_grid: step must be positive");

  TruncationGrid grid;
  grid.gamma_min = gamma_min;
  grid.gamma_max = gamma_max;
  grid.step = step;
  // Values within one relative ulp-scale tolerance of gamma_max collapse
  // into the exact endpoint, so 0.60 + 40 * 0.01 lands on 1.0, not
  // 0.9999999999999999.
  const double tolerance = step * 1e-6;
  for (int i = 0;; ++i) {
    const double value = gamma_min + i * step;
    if (value >= gamma_max - tolerance) break;
    grid.gammas.push_back(value);
  }
  grid.gammas.push_back(gamma_max);
  return grid;
}

double empirical_quantile(const Eigen::VectorXd& values, double gamma) {
  const Eigen::Index n = values.size();
  if (n == 0) throw EmptyInputError("empirical_quantile: empty input");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw DomainError("empirical_quantile: gamma must be in (0, 1]");
  }
  if (!values.allFinite()) {
    throw DomainError("empirical_quantile: non-finite value");
  }
  // ceil with a backoff for products like 0.61 * 100 that land one ulp
  // above an integer.
  auto k = static_cast<Eigen::Index>(
      std::ceil(gamma * static_cast<double>(n) - 1e-9));
  k = std::clamp<Eigen::Index>(k, 1, n);
  std::vector<double> sorted(values.data(), values.data() + n);
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
  return sorted[k - 1];
}

Eigen::VectorXd truncate_upper(const Eigen::VectorXd& ps, double gamma) {
  if (ps.size() == 0) throw EmptyInputError("truncate_upper: empty input");
  if ((ps.array() <= 0.0).any() || (ps.array() >= 1.0).any()) {
    throw DomainError("truncate_upper: propensity scores must lie in (0, 1)");
  }
  const double cap = empirical_quantile(ps, gamma);
  return ps.cwiseMin(cap);
}

}  // namespace pstmle
