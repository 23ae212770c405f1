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

#include <string>
#include <vector>

#include "pstmle/estimators.hpp"
#include "pstmle/simulation.hpp"

namespace pstmle {

inline constexpr int kReportSchemaVersion = 1;

// Single-estimate JSON report:
//   {"schema_version", "method", "psi", "se", "ci_lower", "ci_upper",
//    "gamma", "diagnostics"}.
std::string ate_estimate_json(const AteEstimate& estimate);
std::string ate_estimate_csv(const AteEstimate& estimate);

// Method-per-row summary; a method with a Monte Carlo SE contributes a
// second, starred row whose se/coverage columns use the true SE.
std::string simulation_report_csv(const SimulationReport& report);
std::string simulation_report_json(const SimulationReport& report,
                                   bool keep_replicates);

// Header "estimator,gamma,bias,se,mse,R", one row per (estimator, gamma).
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace pstmle
