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

#include "pstmle/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "pstmle/errors.hpp"
#include "pstmle/glm.hpp"
#include "pstmle/rng.hpp"
#include "pstmle/selectors.hpp"

namespace pstmle {
namespace {

// Runs body(0..total-1) on `jobs` threads; any index may run on any
// thread, so bodies must only write to their own slot.
void parallel_for(int total, int jobs, const std::function<void(int)>& body) {
  jobs = std::max(1, std::min(jobs, total));
  if (jobs == 1) {
    for (int i = 0; i < total; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    workers.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= total) return;
        try {
          body(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (std::thread& worker : workers) worker.join();
  if (failure) std::rethrow_exception(failure);
}

Eigen::VectorXd treatment_linear_predictor(const DgpConfig& config,
                                           const Eigen::MatrixXd& w) {
  Eigen::VectorXd lp = w.col(0) + w.col(1);
  for (Eigen::Index j = config.sum_from - 1; j < DgpConfig::kNumCovariates;
       ++j) {
    lp += (3.0 / 20.0) * w.col(j);
  }
  return (lp.array() + config.c).matrix();
}

struct ReplicationPieces {
  Dataset data;
  std::optional<Eigen::VectorXd> ps_fitted;
  std::optional<Eigen::VectorXd> ps_true;
  std::optional<OutcomeFit> initial;
  std::string nuisance_error;
};

bool needs_outcome_fit(const Method& m) {
  return m.estimator == EstimatorKind::kAipw ||
         m.estimator == EstimatorKind::kTmle;
}

ReplicationPieces build_pieces(const DgpConfig& config,
                               const std::vector<Method>& methods,
                               const HarnessConfig& harness,
                               std::uint64_t replication) {
  ReplicationPieces pieces;
  pieces.data = sample_dataset(config, replication);
  const bool any_fitted =
      std::any_of(methods.begin(), methods.end(),
                  [](const Method& m) { return !m.use_true_ps; });
  const bool any_true =
      std::any_of(methods.begin(), methods.end(),
                  [](const Method& m) { return m.use_true_ps; });
  const bool any_outcome =
      std::any_of(methods.begin(), methods.end(), needs_outcome_fit);
  try {
    if (any_fitted) {
      const DesignMatrix x = DesignMatrix::with_intercept(pieces.data.w);
      pieces.ps_fitted =
          predict_proba(fit_logistic(x, pieces.data.a, 0.0), x);
    }
    if (any_true) {
      pieces.ps_true = true_propensity(config, pieces.data);
    }
    if (any_outcome) {
      pieces.initial =
          fit_initial_outcome(pieces.data, harness.outcome_columns);
    }
  } catch (const std::exception& e) {
    pieces.nuisance_error = e.what();
  }
  return pieces;
}

AteEstimate estimate_at(EstimatorKind kind, const Dataset& data,
                        const Eigen::VectorXd& ps_truncated,
                        const OutcomeFit* initial) {
  switch (kind) {
    case EstimatorKind::kIpw:
      return ipw_estimate(data, ps_truncated);
    case EstimatorKind::kHajek:
      return hajek_estimate(data, ps_truncated);
    case EstimatorKind::kAipw:
      return aipw_estimate(data, ps_truncated, *initial);
    case EstimatorKind::kTmle:
      return tmle_estimate(data, ps_truncated, *initial).estimate;
  }
  throw DomainError("unknown estimator kind");
}

ReplicateOutcome evaluate_method(const Method& method,
                                 const ReplicationPieces& pieces,
                                 const HarnessConfig& harness,
                                 std::uint64_t selector_seed, double truth) {
  ReplicateOutcome outcome;
  try {
    if (!pieces.nuisance_error.empty()) {
      throw Error(pieces.nuisance_error);
    }
    const Eigen::VectorXd& ps =
        method.use_true_ps ? *pieces.ps_true : *pieces.ps_fitted;
    const OutcomeFit* initial =
        pieces.initial ? &*pieces.initial : nullptr;
    SelectorConfig selector_config;
    selector_config.outcome_columns = harness.outcome_columns;

    AteEstimate estimate;
    double gamma = 0.0;
    switch (method.selector) {
      case SelectorKind::kFixed:
        gamma = method.fixed_gamma;
        estimate = estimate_at(method.estimator, pieces.data,
                               truncate_upper(ps, gamma), initial);
        break;
      case SelectorKind::kCv:
        gamma = cv_select_gamma(pieces.data, harness.grid, harness.cv_folds,
                                selector_seed, selector_config);
        estimate = estimate_at(method.estimator, pieces.data,
                               truncate_upper(ps, gamma), initial);
        break;
      case SelectorKind::kMv:
        gamma = mv_select_gamma(pieces.data, harness.grid, harness.mv_repeats,
                                selector_seed, selector_config, &ps);
        estimate = estimate_at(method.estimator, pieces.data,
                               truncate_upper(ps, gamma), initial);
        break;
      case SelectorKind::kCtmle: {
        const CtmleResult result =
            ctmle_select(*initial, pieces.data, harness.grid,
                         harness.cv_folds, selector_seed, &ps,
                         selector_config);
        estimate = result.estimate;
        gamma = result.gamma;
        break;
      }
    }
    outcome.ok = true;
    outcome.psi = estimate.psi;
    outcome.se = estimate.se;
    outcome.gamma = gamma;
    outcome.covered =
        estimate.ci_lower <= truth && truth <= estimate.ci_upper;
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.error = e.what();
  }
  return outcome;
}

void check_methods(const std::vector<Method>& methods) {
  if (methods.empty()) throw EmptyInputError("no methods given");
  for (const Method& m : methods) {
    if ((m.selector == SelectorKind::kMv ||
         m.selector == SelectorKind::kCtmle) &&
        m.estimator != EstimatorKind::kTmle) {
      throw DomainError("selector '" + m.label() +
                        "' requires the tmle estimator");
    }
    if (m.selector == SelectorKind::kFixed &&
        !(m.fixed_gamma > 0.0 && m.fixed_gamma <= 1.0)) {
      throw DomainError("fixed gamma must be in (0, 1]");
    }
  }
}

std::string format_gamma(double gamma) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.2f", gamma);
  return buffer;
}

}  // namespace

void DgpConfig::validate() const {
  if (n < 30) throw InsufficientDataError("need n >= 30");
  if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("need rho in [0, 1)");
  if (sum_from != 2 && sum_from != 3) {
    throw DomainError("sum_from must be 2 or 3");
  }
  if (!std::isfinite(c) || !std::isfinite(treatment_effect)) {
    throw DomainError("non-finite design parameter");
  }
}

Dataset sample_dataset(const DgpConfig& config, std::uint64_t replication) {
  config.validate();
  const Eigen::Index p = DgpConfig::kNumCovariates;
  Eigen::MatrixXd sigma =
      Eigen::MatrixXd::Constant(p, p, config.rho);
  sigma.diagonal().setOnes();
  const Eigen::MatrixXd chol = sigma.llt().matrixL();

  Rng rng(config.seed, replication);
  Dataset data;
  data.w.resize(config.n, p);
  Eigen::VectorXd z(p);
  for (Eigen::Index i = 0; i < config.n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) z[j] = rng.normal();
    data.w.row(i) = (chol * z).transpose();
  }

  const Eigen::VectorXd lp = treatment_linear_predictor(config, data.w);
  data.a.resize(config.n);
  for (Eigen::Index i = 0; i < config.n; ++i) {
    data.a[i] = rng.bernoulli(expit(lp[i])) ? 1.0 : 0.0;
  }

  data.y.resize(config.n);
  for (Eigen::Index i = 0; i < config.n; ++i) {
    const double mean = 2.0 +
                        2.0 * (data.w(i, 0) + data.w(i, 1) + data.w(i, 4) +
                               data.w(i, 5) + data.w(i, 7)) +
                        config.treatment_effect * data.a[i];
    data.y[i] = mean + rng.normal();
  }
  return data;
}

Eigen::VectorXd true_propensity(const DgpConfig& config, const Dataset& data) {
  if (data.w.cols() != DgpConfig::kNumCovariates) {
    throw ShapeError("dataset does not match the design dimension");
  }
  return treatment_linear_predictor(config, data.w)
      .array()
      .unaryExpr([](double e) { return expit(e); })
      .max(kProbabilityFloor)
      .min(1.0 - kProbabilityFloor)
      .matrix();
}

double true_ate(const DgpConfig& config) { return config.treatment_effect; }

std::string Method::label() const {
  std::string text = use_true_ps ? "true-ps:" : "";
  switch (estimator) {
    case EstimatorKind::kIpw: text += "ipw"; break;
    case EstimatorKind::kHajek: text += "hajek"; break;
    case EstimatorKind::kAipw: text += "aipw"; break;
    case EstimatorKind::kTmle: text += "tmle"; break;
  }
  switch (selector) {
    case SelectorKind::kFixed: text += ":fixed:" + format_gamma(fixed_gamma); break;
    case SelectorKind::kCv: text += ":cv"; break;
    case SelectorKind::kMv: text += ":mv"; break;
    case SelectorKind::kCtmle: text += ":ctmle"; break;
  }
  return text;
}

Method Method::parse(const std::string& text) {
  Method method;
  std::string rest = text;
  const std::string oracle_prefix = "true-ps:";
  if (rest.rfind(oracle_prefix, 0) == 0) {
    method.use_true_ps = true;
    rest = rest.substr(oracle_prefix.size());
  }
  const auto colon = rest.find(':');
  if (colon == std::string::npos) {
    throw DomainError("method '" + text +
                      "' must look like <estimator>:<selector>");
  }
  const std::string estimator = rest.substr(0, colon);
  std::string selector = rest.substr(colon + 1);
  if (estimator == "ipw") {
    method.estimator = EstimatorKind::kIpw;
  } else if (estimator == "hajek") {
    method.estimator = EstimatorKind::kHajek;
  } else if (estimator == "aipw") {
    method.estimator = EstimatorKind::kAipw;
  } else if (estimator == "tmle") {
    method.estimator = EstimatorKind::kTmle;
  } else {
    throw DomainError("unknown estimator '" + estimator + "'");
  }
  if (selector == "cv") {
    method.selector = SelectorKind::kCv;
  } else if (selector == "mv") {
    method.selector = SelectorKind::kMv;
  } else if (selector == "ctmle") {
    method.selector = SelectorKind::kCtmle;
  } else if (selector.rfind("fixed:", 0) == 0) {
    method.selector = SelectorKind::kFixed;
    try {
      method.fixed_gamma = std::stod(selector.substr(6));
    } catch (const std::exception&) {
      throw DomainError("bad fixed gamma in method '" + text + "'");
    }
  } else {
    throw DomainError("unknown selector '" + selector + "'");
  }
  if ((method.selector == SelectorKind::kMv ||
       method.selector == SelectorKind::kCtmle) &&
      method.estimator != EstimatorKind::kTmle) {
    throw DomainError("selector '" + selector +
                      "' requires the tmle estimator");
  }
  return method;
}

bool SimulationReport::exceeds_failure_threshold() const {
  for (const MethodSummary& m : methods) {
    if (m.failures > 0.05 * total_replications) return true;
  }
  return false;
}

SimulationReport run_replications(const DgpConfig& config,
                                  const std::vector<Method>& methods, int R,
                                  const HarnessConfig& harness) {
  config.validate();
  check_methods(methods);
  if (R < 2) throw DomainError("need at least two replications");

  const double truth = true_ate(config);
  std::vector<std::vector<ReplicateOutcome>> slots(
      methods.size(), std::vector<ReplicateOutcome>(static_cast<std::size_t>(R)));

  parallel_for(R, harness.jobs, [&](int r) {
    const auto replication = static_cast<std::uint64_t>(r);
    const ReplicationPieces pieces =
        build_pieces(config, methods, harness, replication);
    const std::uint64_t selector_seed = mix_seed(config.seed, replication);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      slots[m][static_cast<std::size_t>(r)] =
          evaluate_method(methods[m], pieces, harness, selector_seed, truth);
    }
  });

  SimulationReport report;
  report.config = config;
  report.total_replications = R;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    MethodSummary summary;
    summary.method = methods[m].label();
    std::vector<double> psis;
    double sum_se = 0.0;
    double sum_gamma = 0.0;
    double sum_sq_error = 0.0;
    int covered = 0;
    for (const ReplicateOutcome& rep : slots[m]) {
      if (!rep.ok) {
        ++summary.failures;
        continue;
      }
      psis.push_back(rep.psi);
      sum_se += rep.se;
      sum_gamma += rep.gamma;
      sum_sq_error += (rep.psi - truth) * (rep.psi - truth);
      covered += rep.covered ? 1 : 0;
    }
    summary.replications = static_cast<int>(psis.size());
    if (summary.replications >= 2) {
      double sum = 0.0;
      for (const double psi : psis) sum += psi;
      const auto count = static_cast<double>(psis.size());
      summary.bias = sum / count - truth;
      summary.se = sample_sd(psis);
      summary.mse = sum_sq_error / count;
      summary.coverage = static_cast<double>(covered) / count;
      summary.mean_gamma = sum_gamma / count;
      summary.mean_se_hat = sum_se / count;
    }
    if (harness.keep_replicates) summary.replicates = slots[m];
    report.methods.push_back(std::move(summary));
  }
  return report;
}

double monte_carlo_true_se(const DgpConfig& config, const Method& method,
                           int r_large, const HarnessConfig& harness) {
  check_methods({method});
  if (r_large < 1000) {
    throw DomainError("monte_carlo_true_se: need at least 1000 replications");
  }
  const double truth = true_ate(config);
  std::vector<ReplicateOutcome> slots(static_cast<std::size_t>(r_large));
  parallel_for(r_large, harness.jobs, [&](int r) {
    const std::uint64_t replication =
        kTrueSeStreamOffset + static_cast<std::uint64_t>(r);
    const ReplicationPieces pieces =
        build_pieces(config, {method}, harness, replication);
    const std::uint64_t selector_seed = mix_seed(config.seed, replication);
    slots[static_cast<std::size_t>(r)] =
        evaluate_method(method, pieces, harness, selector_seed, truth);
  });

  std::vector<double> psis;
  psis.reserve(slots.size());
  for (const ReplicateOutcome& rep : slots) {
    if (rep.ok) psis.push_back(rep.psi);
  }
  if (psis.size() < 0.95 * static_cast<double>(r_large)) {
    throw ConvergenceError(
        "monte_carlo_true_se: more than 5% of replications failed", {});
  }
  return sample_sd(psis);
}

void attach_true_se(SimulationReport& report,
                    const std::vector<Method>& methods, int r_large,
                    const HarnessConfig& harness) {
  if (methods.size() != report.methods.size()) {
    throw ShapeError("attach_true_se: method list does not match report");
  }
  const double truth = true_ate(report.config);
  for (std::size_t m = 0; m < methods.size(); ++m) {
    MethodSummary& summary = report.methods[m];
    if (summary.replicates.empty()) {
      throw DomainError(
          "attach_true_se: report was built without keep_replicates");
    }
    const double true_se =
        monte_carlo_true_se(report.config, methods[m], r_large, harness);
    int covered = 0;
    int ok = 0;
    for (const ReplicateOutcome& rep : summary.replicates) {
      if (!rep.ok) continue;
      ++ok;
      if (std::abs(rep.psi - truth) <= 1.96 * true_se) ++covered;
    }
    summary.true_se = true_se;
    summary.true_se_coverage =
        ok > 0 ? static_cast<double>(covered) / ok : 0.0;
  }
}

double monte_carlo_true_se(
    const DgpConfig& config,
    const std::function<double(const Dataset&)>& point_estimator, int r_large,
    int jobs) {
  if (r_large < 1000) {
    throw DomainError("monte_carlo_true_se: need at least 1000 replications");
  }
  std::vector<double> psis(static_cast<std::size_t>(r_large));
  parallel_for(r_large, jobs, [&](int r) {
    const Dataset data = sample_dataset(
        config, kTrueSeStreamOffset + static_cast<std::uint64_t>(r));
    psis[static_cast<std::size_t>(r)] = point_estimator(data);
  });
  return sample_sd(psis);
}

std::vector<SweepRow> run_sweep(const DgpConfig& config,
                                const std::vector<EstimatorKind>& estimators,
                                const TruncationGrid& grid, int R,
                                const HarnessConfig& harness) {
  config.validate();
  if (estimators.empty()) throw EmptyInputError("no estimators given");
  if (grid.size() == 0) throw EmptyInputError("empty truncation grid");
  if (R < 2) throw DomainError("need at least two replications");

  const double truth = true_ate(config);
  const auto num_levels = grid.size();
  const bool any_outcome =
      std::any_of(estimators.begin(), estimators.end(), [](EstimatorKind k) {
        return k == EstimatorKind::kAipw || k == EstimatorKind::kTmle;
      });

  struct Cell {
    bool ok = false;
    double psi = 0.0;
  };
  std::vector<std::vector<Cell>> slots(
      estimators.size() * num_levels,
      std::vector<Cell>(static_cast<std::size_t>(R)));

  parallel_for(R, harness.jobs, [&](int r) {
    const Dataset data =
        sample_dataset(config, static_cast<std::uint64_t>(r));
    std::optional<Eigen::VectorXd> ps;
    std::optional<OutcomeFit> initial;
    try {
      const DesignMatrix x = DesignMatrix::with_intercept(data.w);
      ps = predict_proba(fit_logistic(x, data.a, 0.0), x);
      if (any_outcome) {
        initial = fit_initial_outcome(data, harness.outcome_columns);
      }
    } catch (const std::exception&) {
      return;  // all cells of this replication stay failed
    }
    for (std::size_t g = 0; g < num_levels; ++g) {
      Eigen::VectorXd ps_truncated;
      try {
        ps_truncated = truncate_upper(*ps, grid.gammas[g]);
      } catch (const std::exception&) {
        continue;
      }
      for (std::size_t e = 0; e < estimators.size(); ++e) {
        Cell& cell = slots[e * num_levels + g][static_cast<std::size_t>(r)];
        try {
          const AteEstimate est = estimate_at(
              estimators[e], data, ps_truncated,
              initial ? &*initial : nullptr);
          cell.ok = true;
          cell.psi = est.psi;
        } catch (const std::exception&) {
          cell.ok = false;
        }
      }
    }
  });

  const auto estimator_name = [](EstimatorKind kind) -> std::string {
    switch (kind) {
      case EstimatorKind::kIpw: return "ipw";
      case EstimatorKind::kHajek: return "hajek";
      case EstimatorKind::kAipw: return "aipw";
      case EstimatorKind::kTmle: return "tmle";
    }
    return "?";
  };

  std::vector<SweepRow> rows;
  rows.reserve(estimators.size() * num_levels);
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    for (std::size_t g = 0; g < num_levels; ++g) {
      SweepRow row;
      row.estimator = estimator_name(estimators[e]);
      row.gamma = grid.gammas[g];
      std::vector<double> psis;
      double sum_sq_error = 0.0;
      for (const Cell& cell : slots[e * num_levels + g]) {
        if (!cell.ok) continue;
        psis.push_back(cell.psi);
        sum_sq_error += (cell.psi - truth) * (cell.psi - truth);
      }
      row.replications = static_cast<int>(psis.size());
      if (row.replications >= 2) {
        double sum = 0.0;
        for (const double psi : psis) sum += psi;
        row.bias = sum / static_cast<double>(psis.size()) - truth;
        row.se = sample_sd(psis);
        row.mse = sum_sq_error / static_cast<double>(psis.size());
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

double sample_sd(const std::vector<double>& values) {
  if (values.size() < 2) {
    throw InsufficientDataError("sample_sd: need at least two values");
  }
  double sum = 0.0;
  for (const double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace pstmle
