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

#include "pstmle/reporting.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

namespace pstmle {
namespace {

using Json = nlohmann::ordered_json;

std::string num(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.12g", value);
  return buffer;
}

Json config_json(const DgpConfig& config) {
  Json j;
  j["c"] = config.c;
  j["n"] = config.n;
  j["rho"] = config.rho;
  j["seed"] = config.seed;
  j["sum_from"] = config.sum_from;
  j["treatment_effect"] = config.treatment_effect;
  return j;
}

Json summary_json(const MethodSummary& m, bool keep_replicates) {
  Json j;
  j["method"] = m.method;
  j["bias"] = m.bias;
  j["se"] = m.se;
  j["mse"] = m.mse;
  j["coverage"] = m.coverage;
  j["mean_gamma"] = m.mean_gamma;
  j["mean_se_hat"] = m.mean_se_hat;
  j["replications"] = m.replications;
  j["failures"] = m.failures;
  if (m.true_se) {
    j["true_se"] = *m.true_se;
    j["true_se_coverage"] = *m.true_se_coverage;
  }
  if (keep_replicates && !m.replicates.empty()) {
    Json reps;
    reps["psi"] = Json::array();
    reps["se"] = Json::array();
    reps["gamma"] = Json::array();
    reps["covered"] = Json::array();
    reps["ok"] = Json::array();
    for (const ReplicateOutcome& rep : m.replicates) {
      reps["psi"].push_back(rep.psi);
      reps["se"].push_back(rep.se);
      reps["gamma"].push_back(rep.gamma);
      reps["covered"].push_back(rep.covered);
      reps["ok"].push_back(rep.ok);
    }
    j["replicates"] = std::move(reps);
  }
  return j;
}

}  // namespace

std::string ate_estimate_json(const AteEstimate& estimate) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["method"] = estimate.method;
  j["psi"] = estimate.psi;
  j["se"] = estimate.se;
  j["ci_lower"] = estimate.ci_lower;
  j["ci_upper"] = estimate.ci_upper;
  if (estimate.gamma) {
    j["gamma"] = *estimate.gamma;
  } else {
    j["gamma"] = nullptr;
  }
  Json diagnostics = Json::object();
  for (const auto& [key, value] : estimate.diagnostics) {
    diagnostics[key] = value;
  }
  j["diagnostics"] = std::move(diagnostics);
  return j.dump(2) + "\n";
}

std::string ate_estimate_csv(const AteEstimate& estimate) {
  std::string out = "method,psi,se,ci_lower,ci_upper,gamma\n";
  out += estimate.method + ',' + num(estimate.psi) + ',' + num(estimate.se) +
         ',' + num(estimate.ci_lower) + ',' + num(estimate.ci_upper) + ',';
  out += estimate.gamma ? num(*estimate.gamma) : "";
  out += '\n';
  return out;
}

std::string simulation_report_csv(const SimulationReport& report) {
  std::string out =
      "method,bias,se,mse,coverage,mean_gamma,mean_se_hat,replications,"
      "failures\n";
  for (const MethodSummary& m : report.methods) {
    out += m.method + ',' + num(m.bias) + ',' + num(m.se) + ',' + num(m.mse) +
           ',' + num(m.coverage) + ',' + num(m.mean_gamma) + ',' +
           num(m.mean_se_hat) + ',' + std::to_string(m.replications) + ',' +
           std::to_string(m.failures) + '\n';
    if (m.true_se) {
      out += m.method + "*," + num(m.bias) + ',' + num(*m.true_se) + ',' +
             num(m.mse) + ',' + num(*m.true_se_coverage) + ',' +
             num(m.mean_gamma) + ',' + num(m.mean_se_hat) + ',' +
             std::to_string(m.replications) + ',' +
             std::to_string(m.failures) + '\n';
    }
  }
  return out;
}

std::string simulation_report_json(const SimulationReport& report,
                                   bool keep_replicates) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config"] = config_json(report.config);
  j["replications"] = report.total_replications;
  j["methods"] = Json::array();
  for (const MethodSummary& m : report.methods) {
    j["methods"].push_back(summary_json(m, keep_replicates));
  }
  return j.dump(2) + "\n";
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "estimator,gamma,bias,se,mse,R\n";
  for (const SweepRow& row : rows) {
    out += row.estimator + ',' + num(row.gamma) + ',' + num(row.bias) + ',' +
           num(row.se) + ',' + num(row.mse) + ',' +
           std::to_string(row.replications) + '\n';
  }
  return out;
}

}  // namespace pstmle
