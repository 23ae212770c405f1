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

#include "pstmle/estimators.hpp"

#include <cmath>

#include <doctest.h>

#include "pstmle/errors.hpp"
#include "pstmle/glm.hpp"
#include "pstmle/truncation.hpp"
#include "support/test_support.hpp"

using namespace pstmle;
using pstmle::testing::oracle_fluctuate;
using pstmle::testing::random_dataset;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (const double x : values) v[i++] = x;
  return v;
}

Dataset two_row_dataset(std::initializer_list<double> a,
                        std::initializer_list<double> y) {
  Dataset data;
  data.a = vec(a);
  data.y = vec(y);
  data.w = Eigen::MatrixXd::Zero(data.a.size(), 1);
  for (Eigen::Index i = 0; i < data.a.size(); ++i) {
    data.w(i, 0) = 0.1 * static_cast<double>(i + 1);
  }
  return data;
}

// Outcome fit with prescribed unit-scale predictions; epsilon history empty.
OutcomeFit manual_fit(const Eigen::VectorXd& q_obs, const Eigen::VectorXd& q1,
                      const Eigen::VectorXd& q0, OutcomeScaling scaling) {
  OutcomeFit fit;
  fit.q_observed = q_obs;
  fit.q_treated = q1;
  fit.q_control = q0;
  fit.scaling = scaling;
  return fit;
}

}  // namespace

TEST_CASE("scale_outcome maps min-max to the unit interval") {
  const auto [scaled, scaling] = scale_outcome(vec({1.0, 3.0, 5.0}));
  CHECK(scaling.lower == 1.0);
  CHECK(scaling.upper == 5.0);
  CHECK(scaled == vec({0.0, 0.5, 1.0}));
  // Round trip back to the original scale.
  for (Eigen::Index i = 0; i < scaled.size(); ++i) {
    CHECK(scaling.to_original(scaled[i]) ==
          doctest::Approx(vec({1.0, 3.0, 5.0})[i]).epsilon(1e-15));
  }
}

TEST_CASE("scale_outcome rejects degenerate inputs") {
  CHECK_THROWS_AS(scale_outcome(vec({2.0, 2.0, 2.0})),
                  DegenerateOutcomeError);
  CHECK_THROWS_AS(scale_outcome(vec({2.0})), InsufficientDataError);
  Eigen::VectorXd bad = vec({1.0, 2.0});
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(scale_outcome(bad), DomainError);
}

TEST_CASE("fit_initial_outcome recovers an exactly linear outcome") {
  // y depends only on A and W's first column, so OLS on those regressors
  // reproduces the scaled outcome wherever the clamp is inactive.
  Dataset data;
  const Eigen::Index n = 24;
  data.w.resize(n, 3);
  data.a.resize(n);
  Rng rng(7, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) data.w(i, j) = rng.normal();
    data.a[i] = (i % 2 == 0) ? 1.0 : 0.0;
  }
  data.y = (2.0 + 1.5 * data.a.array() + 0.5 * data.w.col(0).array()).matrix();

  const OutcomeFit fit = fit_initial_outcome(data, {0});
  const auto [y_scaled, scaling] = scale_outcome(data.y);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double want_obs =
        std::clamp(y_scaled[i], kOutcomeFloor, 1.0 - kOutcomeFloor);
    CHECK(fit.q_observed[i] == doctest::Approx(want_obs).epsilon(1e-10));
    // Counterfactual rows follow the same linear form.
    const double q1 = scaling.to_unit(2.0 + 1.5 + 0.5 * data.w(i, 0));
    const double want1 = std::clamp(q1, kOutcomeFloor, 1.0 - kOutcomeFloor);
    CHECK(fit.q_treated[i] == doctest::Approx(want1).epsilon(1e-10));
  }
  CHECK(fit.epsilons.empty());
}

TEST_CASE("fit_initial_outcome clamps predictions into the open unit interval") {
  Dataset data = random_dataset(40, 2, 3);
  // Inflate the outcome so counterfactual extrapolations leave [0, 1].
  data.y *= 50.0;
  const OutcomeFit fit = fit_initial_outcome(data);
  for (const auto* q : {&fit.q_observed, &fit.q_treated, &fit.q_control}) {
    CHECK((*q).minCoeff() >= kOutcomeFloor);
    CHECK((*q).maxCoeff() <= 1.0 - kOutcomeFloor);
  }
}

TEST_CASE("fit_initial_outcome validates column indices") {
  const Dataset data = random_dataset(20, 2, 4);
  CHECK_THROWS_AS(fit_initial_outcome(data, {2}), DomainError);
  CHECK_THROWS_AS(fit_initial_outcome(data, {-1}), DomainError);
}

TEST_CASE("subset_rows reorders and validates") {
  const OutcomeFit fit = manual_fit(vec({0.1, 0.2, 0.3}), vec({0.4, 0.5, 0.6}),
                                    vec({0.7, 0.8, 0.9}), {0.0, 1.0});
  const OutcomeFit sub = subset_rows(fit, {2, 0});
  CHECK(sub.q_observed == vec({0.3, 0.1}));
  CHECK(sub.q_treated == vec({0.6, 0.4}));
  CHECK(sub.q_control == vec({0.9, 0.7}));
  CHECK_THROWS_AS(subset_rows(fit, {3}), ShapeError);
}

TEST_CASE("clever_covariate hand values and validation") {
  const Eigen::VectorXd h =
      clever_covariate(vec({1.0, 0.0}), vec({0.25, 0.2}));
  CHECK(h[0] == 4.0);
  CHECK(h[1] == -1.25);

  CHECK_THROWS_AS(clever_covariate(vec({1.0}), vec({0.5, 0.5})), ShapeError);
  CHECK_THROWS_AS(clever_covariate(vec({1.0}), vec({1.0})), DomainError);
  CHECK_THROWS_AS(clever_covariate(vec({0.0}), vec({0.0})), DomainError);
}

TEST_CASE("quasibinomial_loss hand value and floor") {
  const double loss =
      quasibinomial_loss(vec({1.0, 0.0}), vec({0.8, 0.3}));
  CHECK(loss ==
        doctest::Approx(-0.5 * (std::log(0.8) + std::log(0.7))).epsilon(1e-15));

  // A saturated prediction stays finite through the log floor.
  const double saturated = quasibinomial_loss(vec({1.0}), vec({0.0}));
  CHECK(std::isfinite(saturated));
  CHECK(saturated == doctest::Approx(-std::log(1e-300)));

  CHECK_THROWS_AS(quasibinomial_loss(vec({1.0}), vec({0.5, 0.5})), ShapeError);
  CHECK_THROWS_AS(quasibinomial_loss(Eigen::VectorXd(), Eigen::VectorXd()),
                  EmptyInputError);
}

TEST_CASE("ipw hand examples") {
  CHECK(ipw(two_row_dataset({1.0, 0.0}, {3.0, 1.0}), vec({0.5, 0.5})) == 2.0);
  CHECK(ipw(two_row_dataset({1.0, 1.0}, {2.0, 4.0}), vec({0.5, 0.5})) == 6.0);
}

TEST_CASE("hajek stabilizes weights and ignores outcome shifts") {
  const Dataset data = two_row_dataset({1.0, 0.0}, {3.0, 1.0});
  CHECK(hajek_ipw(data, vec({0.5, 0.5})) == 2.0);

  // Arm-normalized weights make the estimate invariant to y -> y + c.
  Dataset big = random_dataset(60, 2, 11);
  const Eigen::VectorXd ps = Eigen::VectorXd::Constant(60, 0.37);
  const double base = hajek_ipw(big, ps);
  big.y.array() += 100.0;
  CHECK(hajek_ipw(big, ps) == doctest::Approx(base).epsilon(1e-12));

  CHECK_THROWS_AS(
      hajek_ipw(two_row_dataset({1.0, 1.0}, {2.0, 4.0}), vec({0.5, 0.5})),
      EmptyArmError);
}

TEST_CASE("aipw equals the plug-in when residuals vanish") {
  // Outcome fit predicts the observed outcomes exactly, so the correction
  // term is zero and AIPW reduces to mean(q1 - q0) = 2.
  const Dataset data = two_row_dataset({1.0, 0.0}, {3.0, 1.0});
  const OutcomeFit fit =
      manual_fit(vec({0.75, 0.25}), vec({0.75, 0.75}), vec({0.25, 0.25}),
                 {0.0, 4.0});
  CHECK(aipw(data, vec({0.5, 0.5}), fit) == 2.0);
}

TEST_CASE("aipw with a zero outcome model is ipw") {
  const Dataset data = random_dataset(50, 2, 21);
  Rng rng(21, 3);
  Eigen::VectorXd ps(50);
  for (Eigen::Index i = 0; i < 50; ++i) ps[i] = 0.2 + 0.6 * rng.uniform();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(50);
  const OutcomeFit fit = manual_fit(zero, zero, zero, {0.0, 1.0});
  CHECK(aipw(data, ps, fit) == doctest::Approx(ipw(data, ps)).epsilon(1e-12));
}

TEST_CASE("fluctuation_epsilon solves the score equation") {
  // Intercept-only fluctuation: h = 1 pushes expit(eps) to mean(y).
  const Eigen::VectorXd offset = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd h = Eigen::VectorXd::Ones(4);
  const double eps = fluctuation_epsilon(offset, h, vec({1.0, 1.0, 0.0, 1.0}));
  CHECK(eps == doctest::Approx(logit(0.75)).epsilon(1e-6));
}

TEST_CASE("fluctuate matches the golden-section oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset data = random_dataset(45, 2, 100 + seed);
    const OutcomeFit initial = fit_initial_outcome(data);
    const Eigen::VectorXd y_scaled = initial.scaling.to_unit(data.y);
    const DesignMatrix x = DesignMatrix::with_intercept(data.w);
    const Eigen::VectorXd ps =
        predict_proba(fit_logistic(x, data.a, 1e-8), x);

    const OutcomeFit produced = fluctuate(initial, data.a, ps, y_scaled);
    const auto oracle =
        oracle_fluctuate(initial.q_observed, initial.q_treated,
                         initial.q_control, data.a, ps, y_scaled);

    REQUIRE(produced.epsilons.size() == 1);
    CHECK(produced.epsilons[0] ==
          doctest::Approx(oracle.epsilon).epsilon(1e-5));
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      CHECK(produced.q_observed[i] ==
            doctest::Approx(oracle.q_observed[i]).epsilon(1e-6));
      CHECK(produced.q_treated[i] ==
            doctest::Approx(oracle.q_treated[i]).epsilon(1e-6));
      CHECK(produced.q_control[i] ==
            doctest::Approx(oracle.q_control[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("one targeting step never raises the empirical loss") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Dataset data = random_dataset(40, 3, 200 + seed);
    const OutcomeFit initial = fit_initial_outcome(data);
    const Eigen::VectorXd y_scaled = initial.scaling.to_unit(data.y);
    const DesignMatrix x = DesignMatrix::with_intercept(data.w);
    const Eigen::VectorXd ps =
        predict_proba(fit_logistic(x, data.a, 1e-8), x);
    const Eigen::VectorXd capped = truncate_upper(ps, 0.8);

    const OutcomeFit next = fluctuate(initial, data.a, capped, y_scaled);
    CHECK(quasibinomial_loss(y_scaled, next.q_observed) <=
          quasibinomial_loss(y_scaled, initial.q_observed) + 1e-12);
  }
}

TEST_CASE("tmle_estimate solves the score and bounds the estimate") {
  const Dataset data = random_dataset(80, 3, 31);
  const OutcomeFit initial = fit_initial_outcome(data);
  const DesignMatrix x = DesignMatrix::with_intercept(data.w);
  const Eigen::VectorXd ps = predict_proba(fit_logistic(x, data.a, 1e-8), x);

  const TmleResult result = tmle_estimate(data, ps, initial);
  const Eigen::VectorXd y_scaled = initial.scaling.to_unit(data.y);
  const Eigen::VectorXd h = clever_covariate(data.a, ps);

  // Mean score at the targeted fit is within the solver tolerance.
  const double score =
      (h.array() * (y_scaled - result.targeted.q_observed).array()).mean();
  CHECK(std::abs(score) <= 1e-8);

  // The plug-in cannot leave the outcome range.
  CHECK(std::abs(result.estimate.psi) <= initial.scaling.range());

  // Interval orientation and diagnostics.
  CHECK(result.estimate.ci_lower <= result.estimate.psi);
  CHECK(result.estimate.psi <= result.estimate.ci_upper);
  CHECK(result.estimate.method == "tmle");
  CHECK(result.estimate.diagnostics.count("epsilon") == 1);
  CHECK(result.estimate.diagnostics.count("max_weight") == 1);
  CHECK(result.estimate.diagnostics.at("max_weight") ==
        h.array().abs().maxCoeff());
}

TEST_CASE("targeting twice is a fixed point") {
  const Dataset data = random_dataset(60, 2, 37);
  const OutcomeFit initial = fit_initial_outcome(data);
  const DesignMatrix x = DesignMatrix::with_intercept(data.w);
  const Eigen::VectorXd ps = predict_proba(fit_logistic(x, data.a, 1e-8), x);

  const TmleResult first = tmle_estimate(data, ps, initial);
  const TmleResult second = tmle_estimate(data, ps, first.targeted);
  CHECK(second.targeted.epsilons.back() == 0.0);
  CHECK(second.estimate.psi ==
        doctest::Approx(first.estimate.psi).epsilon(1e-9));
}

TEST_CASE("tmle_estimate rejects outcomes outside the scaling range") {
  Dataset data = random_dataset(30, 2, 41);
  const OutcomeFit initial = fit_initial_outcome(data);
  data.y[0] = initial.scaling.upper + 1.0;
  const Eigen::VectorXd ps = Eigen::VectorXd::Constant(30, 0.5);
  CHECK_THROWS_AS(tmle_estimate(data, ps, initial), DomainError);
}

TEST_CASE("influence curve is centered after targeting") {
  const Dataset data = random_dataset(70, 3, 43);
  const OutcomeFit initial = fit_initial_outcome(data);
  const DesignMatrix x = DesignMatrix::with_intercept(data.w);
  const Eigen::VectorXd ps = predict_proba(fit_logistic(x, data.a, 1e-8), x);
  const TmleResult result = tmle_estimate(data, ps, initial);

  const Eigen::VectorXd ic =
      influence_curve(data, ps, result.targeted, result.estimate.psi);
  CHECK(std::abs(ic.mean()) <= 1e-6 * initial.scaling.range());
}

TEST_CASE("ic_confidence_interval hand values") {
  const IntervalScale scale = ic_confidence_interval(vec({1.0, -1.0}), 0.95);
  CHECK(scale.se == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(scale.upper_offset == 1.96 * scale.se);
  CHECK(scale.lower_offset == -1.96 * scale.se);

  // Median-width interval: z(0.75) from the inverse normal CDF.
  const IntervalScale half = ic_confidence_interval(vec({1.0, -1.0}), 0.5);
  CHECK(half.upper_offset / half.se ==
        doctest::Approx(0.6744897501960817).epsilon(1e-8));

  CHECK_THROWS_AS(ic_confidence_interval(vec({1.0}), 0.95),
                  InsufficientDataError);
  CHECK_THROWS_AS(ic_confidence_interval(vec({1.0, -1.0}), 0.0), DomainError);
  CHECK_THROWS_AS(ic_confidence_interval(vec({1.0, -1.0}), 1.0), DomainError);
  Eigen::VectorXd bad = vec({1.0, 2.0});
  bad[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(ic_confidence_interval(bad, 0.95), DomainError);
}

TEST_CASE("estimate wrappers agree with the bare point estimators") {
  const Dataset data = random_dataset(55, 2, 47);
  Rng rng(47, 8);
  Eigen::VectorXd ps(55);
  for (Eigen::Index i = 0; i < 55; ++i) ps[i] = 0.15 + 0.7 * rng.uniform();
  const OutcomeFit fit = fit_initial_outcome(data);

  const AteEstimate ipw_est = ipw_estimate(data, ps);
  CHECK(ipw_est.psi == ipw(data, ps));
  CHECK(ipw_est.method == "ipw");

  const AteEstimate hajek_est = hajek_estimate(data, ps);
  CHECK(hajek_est.psi == hajek_ipw(data, ps));
  CHECK(hajek_est.method == "hajek");

  const AteEstimate aipw_est = aipw_estimate(data, ps, fit);
  CHECK(aipw_est.psi == aipw(data, ps, fit));
  CHECK(aipw_est.method == "aipw");

  for (const AteEstimate* est : {&ipw_est, &hajek_est, &aipw_est}) {
    CHECK(est->se > 0.0);
    CHECK(est->ci_lower <= est->psi);
    CHECK(est->psi <= est->ci_upper);
    CHECK(est->diagnostics.count("max_weight") == 1);
  }
}

TEST_CASE("hajek interval is invariant to outcome shifts") {
  Dataset data = random_dataset(64, 2, 53);
  const Eigen::VectorXd ps = Eigen::VectorXd::Constant(64, 0.42);
  const AteEstimate base = hajek_estimate(data, ps);
  data.y.array() += 250.0;
  const AteEstimate shifted = hajek_estimate(data, ps);
  CHECK(shifted.psi == doctest::Approx(base.psi).epsilon(1e-10));
  CHECK(shifted.se == doctest::Approx(base.se).epsilon(1e-10));
}
