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

#include <algorithm>
#include <cmath>

#include "pstmle/errors.hpp"
#include "pstmle/glm.hpp"

namespace pstmle {
namespace {

// Floor inside the loss logs only; keeps the loss finite when a prediction
// saturates at 0 or 1 in double precision.
constexpr double kLogFloor = 1e-300;

void check_ps(const Eigen::VectorXd& a, const Eigen::VectorXd& ps) {
  if (ps.size() != a.size()) {
    throw ShapeError("propensity vector length does not match data");
  }
  if (!ps.allFinite() || (ps.array() <= 0.0).any() ||
      (ps.array() >= 1.0).any()) {
    throw DomainError("propensity scores must lie strictly in (0, 1)");
  }
}

void check_outcome_rows(const Dataset& data, const OutcomeFit& outcome) {
  if (outcome.q_observed.size() != data.size() ||
      outcome.q_treated.size() != data.size() ||
      outcome.q_control.size() != data.size()) {
    throw ShapeError("outcome fit length does not match data");
  }
}

Eigen::VectorXd clamp_unit(const Eigen::VectorXd& q) {
  return q.array().max(kOutcomeFloor).min(1.0 - kOutcomeFloor).matrix();
}

Eigen::VectorXd logit_vec(const Eigen::VectorXd& q) {
  return q.array().unaryExpr([](double p) { return logit(p); }).matrix();
}

Eigen::VectorXd expit_vec(const Eigen::VectorXd& eta) {
  return eta.array().unaryExpr([](double e) { return expit(e); }).matrix();
}

// Inverse normal CDF (Acklam's rational approximation, |error| < 1.2e-9).
double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r +
            a[5]) *
           q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double q = std::sqrt(-2.0 * std::log(1.0 - p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
           c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

Eigen::VectorXd unscaled(const OutcomeScaling& s, const Eigen::VectorXd& q) {
  return (s.lower + s.range() * q.array()).matrix();
}

AteEstimate with_interval(double psi, const Eigen::VectorXd& ic,
                          std::string method) {
  const IntervalScale scale = ic_confidence_interval(ic, 0.95);
  AteEstimate est;
  est.psi = psi;
  est.se = scale.se;
  est.ci_lower = psi + scale.lower_offset;
  est.ci_upper = psi + scale.upper_offset;
  est.method = std::move(method);
  return est;
}

}  // namespace

std::pair<Eigen::VectorXd, OutcomeScaling> scale_outcome(
    const Eigen::VectorXd& y) {
  if (y.size() < 2) {
    throw InsufficientDataError("scale_outcome: need at least two outcomes");
  }
  if (!y.allFinite()) throw DomainError("scale_outcome: non-finite outcome");
  OutcomeScaling scaling;
  scaling.lower = y.minCoeff();
  scaling.upper = y.maxCoeff();
  if (scaling.range() <= 0.0) {
    throw DegenerateOutcomeError("scale_outcome: outcome is constant");
  }
  return {scaling.to_unit(y), scaling};
}

OutcomeFit fit_initial_outcome(const Dataset& data,
                               const std::vector<int>& outcome_columns) {
  data.validate();
  std::vector<int> columns = outcome_columns;
  if (columns.empty()) {
    columns.resize(static_cast<std::size_t>(data.num_covariates()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
      columns[j] = static_cast<int>(j);
    }
  }
  for (int j : columns) {
    if (j < 0 || j >= data.num_covariates()) {
      throw DomainError("fit_initial_outcome: covariate column out of range");
    }
  }

  auto [y_scaled, scaling] = scale_outcome(data.y);

  const auto n = data.size();
  const auto k = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd predictors(n, k + 1);
  predictors.col(0) = data.a;
  for (Eigen::Index j = 0; j < k; ++j) {
    predictors.col(j + 1) = data.w.col(columns[static_cast<std::size_t>(j)]);
  }

  const DesignMatrix x = DesignMatrix::with_intercept(predictors);
  const LinearFit fit = fit_ols(x, y_scaled);

  Eigen::MatrixXd treated = predictors;
  treated.col(0).setOnes();
  Eigen::MatrixXd control = predictors;
  control.col(0).setZero();

  OutcomeFit outcome;
  outcome.scaling = scaling;
  outcome.q_observed = clamp_unit(predict_linear(fit, x));
  outcome.q_treated =
      clamp_unit(predict_linear(fit, DesignMatrix::with_intercept(treated)));
  outcome.q_control =
      clamp_unit(predict_linear(fit, DesignMatrix::with_intercept(control)));
  return outcome;
}

OutcomeFit subset_rows(const OutcomeFit& fit,
                       const std::vector<std::size_t>& indices) {
  OutcomeFit out;
  out.scaling = fit.scaling;
  out.epsilons = fit.epsilons;
  const auto m = static_cast<Eigen::Index>(indices.size());
  out.q_observed.resize(m);
  out.q_treated.resize(m);
  out.q_control.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto r =
        static_cast<Eigen::Index>(indices[static_cast<std::size_t>(i)]);
    if (r < 0 || r >= fit.q_observed.size()) {
      throw ShapeError("subset_rows: index out of range");
    }
    out.q_observed[i] = fit.q_observed[r];
    out.q_treated[i] = fit.q_treated[r];
    out.q_control[i] = fit.q_control[r];
  }
  return out;
}

Eigen::VectorXd clever_covariate(const Eigen::VectorXd& a,
                                 const Eigen::VectorXd& ps) {
  check_ps(a, ps);
  return (a.array() / ps.array() -
          (1.0 - a.array()) / (1.0 - ps.array()))
      .matrix();
}

double quasibinomial_loss(const Eigen::VectorXd& y_scaled,
                          const Eigen::VectorXd& q) {
  if (y_scaled.size() == 0) throw EmptyInputError("quasibinomial_loss");
  if (q.size() != y_scaled.size()) {
    throw ShapeError("quasibinomial_loss: length mismatch");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    total += y_scaled[i] * std::log(std::max(q[i], kLogFloor)) +
             (1.0 - y_scaled[i]) * std::log(std::max(1.0 - q[i], kLogFloor));
  }
  return -total / static_cast<double>(q.size());
}

double ipw(const Dataset& data, const Eigen::VectorXd& ps) {
  data.validate();
  check_ps(data.a, ps);
  return (data.a.array() * data.y.array() / ps.array() -
          (1.0 - data.a.array()) * data.y.array() / (1.0 - ps.array()))
      .mean();
}

double hajek_ipw(const Dataset& data, const Eigen::VectorXd& ps) {
  data.validate();
  check_ps(data.a, ps);
  const double treated = data.a.sum();
  if (treated == 0.0 || treated == static_cast<double>(data.size())) {
    throw EmptyArmError("hajek_ipw: a treatment arm is empty");
  }
  const Eigen::ArrayXd wt = data.a.array() / ps.array();
  const Eigen::ArrayXd wc = (1.0 - data.a.array()) / (1.0 - ps.array());
  const double mu1 = (wt * data.y.array()).sum() / wt.sum();
  const double mu0 = (wc * data.y.array()).sum() / wc.sum();
  return mu1 - mu0;
}

double aipw(const Dataset& data, const Eigen::VectorXd& ps,
            const OutcomeFit& outcome) {
  data.validate();
  check_ps(data.a, ps);
  check_outcome_rows(data, outcome);
  const Eigen::VectorXd h = clever_covariate(data.a, ps);
  const Eigen::VectorXd q_obs = unscaled(outcome.scaling, outcome.q_observed);
  const Eigen::VectorXd q1 = unscaled(outcome.scaling, outcome.q_treated);
  const Eigen::VectorXd q0 = unscaled(outcome.scaling, outcome.q_control);
  return (h.array() * (data.y - q_obs).array() + q1.array() - q0.array())
      .mean();
}

double fluctuation_epsilon(const Eigen::VectorXd& offset_logit,
                           const Eigen::VectorXd& h,
                           const Eigen::VectorXd& y_scaled) {
  const double eps = fit_offset_logistic(offset_logit, h, y_scaled);
  if (eps == 0.0) return 0.0;
  const Eigen::VectorXd at_zero = expit_vec(offset_logit);
  const Eigen::VectorXd at_eps =
      expit_vec(offset_logit + eps * h);
  if (quasibinomial_loss(y_scaled, at_eps) >
      quasibinomial_loss(y_scaled, at_zero)) {
    return 0.0;
  }
  return eps;
}

OutcomeFit fluctuate(const OutcomeFit& current, const Eigen::VectorXd& a,
                     const Eigen::VectorXd& ps,
                     const Eigen::VectorXd& y_scaled) {
  check_ps(a, ps);
  if (current.q_observed.size() != a.size() || y_scaled.size() != a.size()) {
    throw ShapeError("fluctuate: length mismatch");
  }
  const Eigen::VectorXd offset_obs =
      logit_vec(clamp_unit(current.q_observed));
  const Eigen::VectorXd offset_treated =
      logit_vec(clamp_unit(current.q_treated));
  const Eigen::VectorXd offset_control =
      logit_vec(clamp_unit(current.q_control));

  const Eigen::VectorXd h_obs = clever_covariate(a, ps);
  const Eigen::VectorXd h_treated = ps.array().inverse().matrix();
  const Eigen::VectorXd h_control =
      (-(1.0 - ps.array()).inverse()).matrix();

  const double eps = fluctuation_epsilon(offset_obs, h_obs, y_scaled);

  OutcomeFit next;
  next.scaling = current.scaling;
  next.epsilons = current.epsilons;
  next.epsilons.push_back(eps);
  next.q_observed = expit_vec(offset_obs + eps * h_obs);
  next.q_treated = expit_vec(offset_treated + eps * h_treated);
  next.q_control = expit_vec(offset_control + eps * h_control);
  return next;
}

TmleResult tmle_estimate(const Dataset& data, const Eigen::VectorXd& ps,
                         const OutcomeFit& initial) {
  data.validate();
  check_ps(data.a, ps);
  check_outcome_rows(data, initial);

  const Eigen::VectorXd y_scaled = initial.scaling.to_unit(data.y);
  if ((y_scaled.array() < 0.0).any() || (y_scaled.array() > 1.0).any()) {
    throw DomainError(
        "tmle_estimate: outcome outside the scaling range of the initial "
        "fit");
  }

  TmleResult result;
  result.targeted = fluctuate(initial, data.a, ps, y_scaled);

  const double psi =
      initial.scaling.range() *
      (result.targeted.q_treated - result.targeted.q_control).mean();
  const Eigen::VectorXd ic = influence_curve(data, ps, result.targeted, psi);
  result.estimate = with_interval(psi, ic, "tmle");
  result.estimate.diagnostics["epsilon"] = result.targeted.epsilons.back();
  result.estimate.diagnostics["max_weight"] =
      clever_covariate(data.a, ps).array().abs().maxCoeff();
  return result;
}

Eigen::VectorXd influence_curve(const Dataset& data, const Eigen::VectorXd& ps,
                                const OutcomeFit& targeted, double psi) {
  data.validate();
  check_ps(data.a, ps);
  check_outcome_rows(data, targeted);
  const Eigen::VectorXd h = clever_covariate(data.a, ps);
  const Eigen::VectorXd q_obs = unscaled(targeted.scaling, targeted.q_observed);
  const Eigen::VectorXd q1 = unscaled(targeted.scaling, targeted.q_treated);
  const Eigen::VectorXd q0 = unscaled(targeted.scaling, targeted.q_control);
  return (h.array() * (data.y - q_obs).array() + q1.array() - q0.array() -
          psi)
      .matrix();
}

IntervalScale ic_confidence_interval(const Eigen::VectorXd& ic, double level) {
  const Eigen::Index n = ic.size();
  if (n < 2) {
    throw InsufficientDataError(
        "ic_confidence_interval: need at least two contributions");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw DomainError("ic_confidence_interval: level must be in (0, 1)");
  }
  if (!ic.allFinite()) {
    throw DomainError("ic_confidence_interval: non-finite contribution");
  }
  const double mean = ic.mean();
  const double variance =
      std::max(ic.array().square().mean() - mean * mean, 0.0);
  const double z =
      level == 0.95 ? 1.96 : normal_quantile(0.5 * (1.0 + level));
  IntervalScale scale;
  scale.se = std::sqrt(variance / static_cast<double>(n));
  scale.lower_offset = -z * scale.se;
  scale.upper_offset = z * scale.se;
  return scale;
}

AteEstimate ipw_estimate(const Dataset& data, const Eigen::VectorXd& ps) {
  const double psi = ipw(data, ps);
  const Eigen::VectorXd terms =
      (data.a.array() * data.y.array() / ps.array() -
       (1.0 - data.a.array()) * data.y.array() / (1.0 - ps.array()))
          .matrix();
  AteEstimate est =
      with_interval(psi, (terms.array() - psi).matrix(), "ipw");
  est.diagnostics["max_weight"] =
      clever_covariate(data.a, ps).array().abs().maxCoeff();
  return est;
}

AteEstimate hajek_estimate(const Dataset& data, const Eigen::VectorXd& ps) {
  const double psi = hajek_ipw(data, ps);
  const Eigen::ArrayXd wt = data.a.array() / ps.array();
  const Eigen::ArrayXd wc = (1.0 - data.a.array()) / (1.0 - ps.array());
  const double mu1 = (wt * data.y.array()).sum() / wt.sum();
  const double mu0 = (wc * data.y.array()).sum() / wc.sum();
  const Eigen::ArrayXd ic = wt * (data.y.array() - mu1) / wt.mean() -
                            wc * (data.y.array() - mu0) / wc.mean();
  AteEstimate est = with_interval(psi, ic.matrix(), "hajek");
  est.diagnostics["max_weight"] =
      clever_covariate(data.a, ps).array().abs().maxCoeff();
  return est;
}

AteEstimate aipw_estimate(const Dataset& data, const Eigen::VectorXd& ps,
                          const OutcomeFit& outcome) {
  const double psi = aipw(data, ps, outcome);
  const Eigen::VectorXd ic = influence_curve(data, ps, outcome, psi);
  AteEstimate est = with_interval(psi, ic, "aipw");
  est.diagnostics["max_weight"] =
      clever_covariate(data.a, ps).array().abs().maxCoeff();
  return est;
}

}  // namespace pstmle
