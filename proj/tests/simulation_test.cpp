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

#include <cmath>

#include <doctest.h>

#include "pstmle/errors.hpp"
#include "pstmle/glm.hpp"

using namespace pstmle;

namespace {

DgpConfig small_config(double c = 0.0, Eigen::Index n = 60) {
  DgpConfig config;
  config.c = c;
  config.n = n;
  config.seed = 12345;
  return config;
}

TruncationGrid identity_grid() {
  TruncationGrid grid;
  grid.gammas = {1.0};
  grid.gamma_min = 1.0;
  grid.gamma_max = 1.0;
  grid.step = 0.0;
  return grid;
}

}  // namespace

TEST_CASE("design validation") {
  DgpConfig config = small_config();
  config.n = 29;
  CHECK_THROWS_AS(config.validate(), InsufficientDataError);
  config = small_config();
  config.rho = 1.0;
  CHECK_THROWS_AS(config.validate(), DomainError);
  config = small_config();
  config.sum_from = 4;
  CHECK_THROWS_AS(config.validate(), DomainError);
  config = small_config();
  config.c = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(config.validate(), DomainError);
}

TEST_CASE("sampled data has the documented shape and is replayable") {
  const DgpConfig config = small_config(1.0, 40);
  const Dataset data = sample_dataset(config, 3);
  CHECK(data.w.rows() == 40);
  CHECK(data.w.cols() == 20);
  CHECK(data.a.size() == 40);
  CHECK(data.y.size() == 40);
  CHECK(data.w.allFinite());
  CHECK(data.y.allFinite());
  for (Eigen::Index i = 0; i < 40; ++i) {
    CHECK((data.a[i] == 0.0 || data.a[i] == 1.0));
  }

  const Dataset again = sample_dataset(config, 3);
  CHECK(again.w == data.w);
  CHECK(again.a == data.a);
  CHECK(again.y == data.y);

  const Dataset other = sample_dataset(config, 4);
  CHECK(other.w != data.w);
}

TEST_CASE("true propensities follow the treatment model") {
  DgpConfig config = small_config(0.7, 35);
  const Dataset data = sample_dataset(config, 0);
  const Eigen::VectorXd ps = true_propensity(config, data);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    double lp = data.w(i, 0) + data.w(i, 1) + config.c;
    for (Eigen::Index j = 2; j < 20; ++j) lp += 0.15 * data.w(i, j);
    CHECK(ps[i] == doctest::Approx(expit(lp)).epsilon(1e-12));
    CHECK(ps[i] > 0.0);
    CHECK(ps[i] < 1.0);
  }

  // sum_from = 2 starts the 3/20-weighted block one covariate earlier,
  // double-counting the second confounder.
  config.sum_from = 2;
  const Eigen::VectorXd ps2 = true_propensity(config, data);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    double lp = data.w(i, 0) + data.w(i, 1) + config.c;
    for (Eigen::Index j = 1; j < 20; ++j) lp += 0.15 * data.w(i, j);
    CHECK(ps2[i] == doctest::Approx(expit(lp)).epsilon(1e-12));
  }

  Dataset narrow = data;
  narrow.w = data.w.leftCols(5);
  CHECK_THROWS_AS(true_propensity(config, narrow), ShapeError);
}

TEST_CASE("larger positivity constant means more treated units") {
  double previous = -1.0;
  for (const double c : {0.0, 1.0, 2.0}) {
    DgpConfig config = small_config(c, 10000);
    const double fraction =
        sample_dataset(config, 0).a.mean();
    CHECK(fraction > previous);
    previous = fraction;
  }
}

TEST_CASE("the true effect is the configured treatment effect") {
  CHECK(true_ate(small_config(0.0)) == 2.0);
  CHECK(true_ate(small_config(5.0, 4000)) == 2.0);
  DgpConfig null_config = small_config();
  null_config.treatment_effect = 0.0;
  CHECK(true_ate(null_config) == 0.0);
}

TEST_CASE("method labels round-trip through parse") {
  for (const std::string label :
       {"ipw:fixed:0.90", "hajek:cv", "aipw:fixed:1.00", "tmle:cv", "tmle:mv",
        "tmle:ctmle", "true-ps:tmle:ctmle", "true-ps:ipw:fixed:0.85"}) {
    CHECK(Method::parse(label).label() == label);
  }
}

TEST_CASE("method parsing rejects malformed tokens") {
  CHECK_THROWS_AS(Method::parse("tmle"), DomainError);
  CHECK_THROWS_AS(Method::parse("foo:cv"), DomainError);
  CHECK_THROWS_AS(Method::parse("tmle:foo"), DomainError);
  CHECK_THROWS_AS(Method::parse("ipw:mv"), DomainError);
  CHECK_THROWS_AS(Method::parse("aipw:ctmle"), DomainError);
  CHECK_THROWS_AS(Method::parse("tmle:fixed:abc"), DomainError);
}

TEST_CASE("replication harness validates its inputs") {
  const DgpConfig config = small_config();
  const std::vector<Method> methods = {Method::parse("tmle:fixed:1.00")};
  CHECK_THROWS_AS(run_replications(config, methods, 1), DomainError);
  CHECK_THROWS_AS(run_replications(config, {}, 4), EmptyInputError);

  Method bad = Method::parse("tmle:fixed:1.00");
  bad.fixed_gamma = 0.0;
  CHECK_THROWS_AS(run_replications(config, {bad}, 4), DomainError);
  bad = Method::parse("tmle:mv");
  bad.estimator = EstimatorKind::kIpw;
  CHECK_THROWS_AS(run_replications(config, {bad}, 4), DomainError);
}

TEST_CASE("report aggregates are internally consistent") {
  const DgpConfig config = small_config(0.5, 80);
  HarnessConfig harness;
  harness.keep_replicates = true;
  const std::vector<Method> methods = {Method::parse("tmle:fixed:1.00"),
                                       Method::parse("ipw:fixed:0.90")};
  const SimulationReport report =
      run_replications(config, methods, 12, harness);

  CHECK(report.total_replications == 12);
  REQUIRE(report.methods.size() == 2);
  for (const MethodSummary& m : report.methods) {
    CHECK(m.replications + m.failures == 12);
    CHECK(m.coverage >= 0.0);
    CHECK(m.coverage <= 1.0);
    CHECK(m.mean_se_hat > 0.0);
    REQUIRE(m.replicates.size() == 12);
    // MSE decomposes into squared bias plus population variance.
    const double r = m.replications;
    const double want =
        m.bias * m.bias + (r - 1.0) / r * m.se * m.se;
    CHECK(m.mse == doctest::Approx(want).epsilon(1e-10));
  }
  CHECK(report.methods[0].method == "tmle:fixed:1.00");
  CHECK(report.methods[1].method == "ipw:fixed:0.90");
}

TEST_CASE("reports are byte-identical across reruns and worker counts") {
  const DgpConfig config = small_config(0.5, 60);
  const std::vector<Method> methods = {Method::parse("tmle:cv"),
                                       Method::parse("tmle:fixed:0.90")};
  HarnessConfig serial;
  serial.keep_replicates = true;
  serial.grid = make_grid(0.80, 1.00, 0.10);
  HarnessConfig threaded = serial;
  threaded.jobs = 4;

  const SimulationReport a = run_replications(config, methods, 8, serial);
  const SimulationReport b = run_replications(config, methods, 8, serial);
  const SimulationReport c = run_replications(config, methods, 8, threaded);

  for (const SimulationReport* other : {&b, &c}) {
    REQUIRE(other->methods.size() == a.methods.size());
    for (std::size_t m = 0; m < a.methods.size(); ++m) {
      CHECK(other->methods[m].bias == a.methods[m].bias);
      CHECK(other->methods[m].se == a.methods[m].se);
      CHECK(other->methods[m].mse == a.methods[m].mse);
      CHECK(other->methods[m].coverage == a.methods[m].coverage);
      CHECK(other->methods[m].mean_gamma == a.methods[m].mean_gamma);
      for (std::size_t r = 0; r < 8; ++r) {
        CHECK(other->methods[m].replicates[r].psi ==
              a.methods[m].replicates[r].psi);
        CHECK(other->methods[m].replicates[r].gamma ==
              a.methods[m].replicates[r].gamma);
      }
    }
  }
}

TEST_CASE("every selector collapses to plain TMLE on the identity grid") {
  const DgpConfig config = small_config(0.5, 60);
  HarnessConfig harness;
  harness.grid = identity_grid();
  harness.keep_replicates = true;
  const std::vector<Method> methods = {
      Method::parse("tmle:fixed:1.00"), Method::parse("tmle:cv"),
      Method::parse("tmle:mv"), Method::parse("tmle:ctmle")};
  const SimulationReport report =
      run_replications(config, methods, 4, harness);

  for (std::size_t r = 0; r < 4; ++r) {
    const ReplicateOutcome& fixed = report.methods[0].replicates[r];
    REQUIRE(fixed.ok);
    for (std::size_t m = 1; m < methods.size(); ++m) {
      const ReplicateOutcome& other = report.methods[m].replicates[r];
      REQUIRE(other.ok);
      CHECK(other.psi == fixed.psi);
      CHECK(other.gamma == 1.0);
    }
  }
}

TEST_CASE("a null effect is estimated near zero") {
  // The true-propensity method sidesteps the overfit of a 21-parameter
  // unpenalized logistic fit at n = 120, which would otherwise leave a
  // finite-sample bias far larger than the Monte Carlo noise.
  DgpConfig config = small_config(0.0, 120);
  config.treatment_effect = 0.0;
  const SimulationReport report = run_replications(
      config, {Method::parse("true-ps:tmle:fixed:1.00")}, 30);
  const MethodSummary& m = report.methods[0];
  CHECK(m.failures == 0);
  // Loose Monte Carlo bound: the bias is a mean of 30 draws.
  CHECK(std::abs(m.bias) < 5.0 * m.se / std::sqrt(30.0));
  CHECK(m.coverage > 0.5);

  // At n = 1000 the fitted-propensity variant is also unbiased within the
  // Monte Carlo noise.
  config.n = 1000;
  const SimulationReport fitted = run_replications(
      config, {Method::parse("tmle:fixed:1.00")}, 30);
  CHECK(fitted.methods[0].failures == 0);
  CHECK(std::abs(fitted.methods[0].bias) <
        5.0 * fitted.methods[0].se / std::sqrt(30.0));
}

TEST_CASE("untruncated weighting with the true propensity is unbiased") {
  DgpConfig config;
  config.c = 0.0;
  config.n = 1000;
  config.seed = 99;
  const SimulationReport report = run_replications(
      config, {Method::parse("true-ps:ipw:fixed:1.00")}, 1000);
  const MethodSummary& m = report.methods[0];
  CHECK(m.failures == 0);
  CHECK(std::abs(m.bias) <= 3.0 * m.se / std::sqrt(1000.0));
}

TEST_CASE("failures are recorded and flagged past the threshold") {
  // A huge positivity constant treats every unit, so the Hajek estimator
  // has an empty control arm in every replication.
  const DgpConfig config = small_config(30.0, 60);
  const std::vector<Method> methods = {Method::parse("hajek:fixed:1.00")};
  HarnessConfig harness;
  harness.keep_replicates = true;
  const SimulationReport report =
      run_replications(config, methods, 4, harness);

  CHECK(report.methods[0].failures == 4);
  CHECK(report.methods[0].replications == 0);
  CHECK(report.exceeds_failure_threshold());
  for (const ReplicateOutcome& rep : report.methods[0].replicates) {
    CHECK(!rep.ok);
    CHECK(!rep.error.empty());
  }
}

TEST_CASE("true-SE Monte Carlo") {
  const DgpConfig config = small_config(0.0, 30);

  SUBCASE("constant point estimator has zero spread") {
    const double sd = monte_carlo_true_se(
        config, [](const Dataset&) { return 3.25; }, 1000);
    CHECK(sd == 0.0);
  }

  SUBCASE("sample means vary and are deterministic across workers") {
    const auto mean_outcome = [](const Dataset& data) {
      return data.y.mean();
    };
    const double serial = monte_carlo_true_se(config, mean_outcome, 1000, 1);
    const double threaded = monte_carlo_true_se(config, mean_outcome, 1000, 4);
    CHECK(serial > 0.0);
    CHECK(threaded == serial);
  }

  SUBCASE("estimate stabilizes as replications double") {
    const auto mean_outcome = [](const Dataset& data) {
      return data.y.mean();
    };
    const double at_1000 = monte_carlo_true_se(config, mean_outcome, 1000);
    const double at_2000 = monte_carlo_true_se(config, mean_outcome, 2000);
    CHECK(std::abs(at_1000 - at_2000) / at_2000 <= 0.1);
  }

  SUBCASE("needs at least 1000 replications") {
    CHECK_THROWS_AS(monte_carlo_true_se(
                        config, [](const Dataset&) { return 0.0; }, 999),
                    DomainError);
    const Method method = Method::parse("ipw:fixed:1.00");
    CHECK_THROWS_AS(monte_carlo_true_se(config, method, 999), DomainError);
  }
}

TEST_CASE("attaching the true SE fills the starred columns") {
  const DgpConfig config = small_config(0.0, 40);
  const std::vector<Method> methods = {Method::parse("ipw:fixed:1.00")};
  HarnessConfig harness;
  harness.keep_replicates = true;
  harness.jobs = 2;
  SimulationReport report = run_replications(config, methods, 6, harness);

  attach_true_se(report, methods, 1000, harness);
  REQUIRE(report.methods[0].true_se.has_value());
  REQUIRE(report.methods[0].true_se_coverage.has_value());
  CHECK(*report.methods[0].true_se > 0.0);
  CHECK(*report.methods[0].true_se_coverage >= 0.0);
  CHECK(*report.methods[0].true_se_coverage <= 1.0);
}

TEST_CASE("attaching the true SE requires kept replicates") {
  const DgpConfig config = small_config(0.0, 40);
  const std::vector<Method> methods = {Method::parse("ipw:fixed:1.00")};
  SimulationReport report = run_replications(config, methods, 4);
  CHECK_THROWS_AS(attach_true_se(report, methods, 1000), DomainError);
  // Method list must line up with the report.
  HarnessConfig harness;
  harness.keep_replicates = true;
  report = run_replications(config, methods, 4, harness);
  CHECK_THROWS_AS(attach_true_se(report, {}, 1000), ShapeError);
}

TEST_CASE("sweep rows are ordered, shared, and deterministic") {
  const DgpConfig config = small_config(0.5, 60);
  const TruncationGrid grid = make_grid(0.90, 1.00, 0.10);
  const std::vector<EstimatorKind> estimators = {EstimatorKind::kIpw,
                                                 EstimatorKind::kTmle};
  const std::vector<SweepRow> rows = run_sweep(config, estimators, grid, 5);

  REQUIRE(rows.size() == 4);
  CHECK(rows[0].estimator == "ipw");
  CHECK(rows[0].gamma == 0.90);
  CHECK(rows[1].estimator == "ipw");
  CHECK(rows[1].gamma == 1.00);
  CHECK(rows[2].estimator == "tmle");
  CHECK(rows[3].estimator == "tmle");
  for (const SweepRow& row : rows) CHECK(row.replications == 5);

  // The fixed-gamma replication harness sees the same streams, so the
  // sweep's TMLE cell reproduces it exactly.
  const SimulationReport report = run_replications(
      config, {Method::parse("tmle:fixed:1.00")}, 5);
  CHECK(rows[3].bias == report.methods[0].bias);
  CHECK(rows[3].se == report.methods[0].se);
  CHECK(rows[3].mse == report.methods[0].mse);

  const std::vector<SweepRow> again = run_sweep(config, estimators, grid, 5);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(again[i].bias == rows[i].bias);
    CHECK(again[i].mse == rows[i].mse);
  }
}

TEST_CASE("sweep validates its inputs") {
  const DgpConfig config = small_config();
  const TruncationGrid grid = make_grid(0.90, 1.00, 0.10);
  CHECK_THROWS_AS(run_sweep(config, {}, grid, 5), EmptyInputError);
  CHECK_THROWS_AS(
      run_sweep(config, {EstimatorKind::kIpw}, TruncationGrid{}, 5),
      EmptyInputError);
  CHECK_THROWS_AS(run_sweep(config, {EstimatorKind::kIpw}, grid, 1),
                  DomainError);
}

TEST_CASE("sample_sd hand values") {
  CHECK(sample_sd({1.0, 2.0, 3.0}) == 1.0);
  CHECK_THROWS_AS(sample_sd({1.0}), InsufficientDataError);
}
