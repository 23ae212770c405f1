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

#include "pstmle/glm.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pstmle/errors.hpp"

namespace pstmle {
namespace {

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) {
    throw DomainError(std::string(what) + " contains a non-finite entry");
  }
}

void check_binary(const Eigen::VectorXd& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw DomainError("response must be 0/1 for fit_logistic");
    }
  }
}

void check_response_rows(const DesignMatrix& x, const Eigen::VectorXd& y) {
  if (y.size() == 0) throw EmptyInputError("empty response");
  if (y.size() != x.rows()) {
    throw ShapeError("response length does not match design rows");
  }
}

void check_full_rank(const DesignMatrix& x, const char* op) {
  if (x.rows() < x.cols()) {
    throw SingularDesignError(std::string(op) +
                              ": fewer rows than columns without ridge");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.values());
  if (qr.rank() < x.cols()) {
    throw SingularDesignError(std::string(op) + ": design is rank deficient");
  }
}

// -2 * loglik + ridge * |beta|^2; probabilities floored inside the logs
// only, so the objective stays finite on separated data.
double penalized_deviance(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& beta, double ridge) {
  const Eigen::ArrayXd eta = (x * beta).array();
  // log(p) = -log1p(exp(-eta)) and log(1-p) = -eta - log1p(exp(-eta)),
  // evaluated in a form that never overflows.
  double loglik = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double e = eta[i];
    const double log_p = e >= 0.0 ? -std::log1p(std::exp(-e))
                                  : e - std::log1p(std::exp(e));
    const double log_q = e >= 0.0 ? -e - std::log1p(std::exp(-e))
                                  : -std::log1p(std::exp(e));
    loglik += y[i] * log_p + (1.0 - y[i]) * log_q;
  }
  return -2.0 * loglik + ridge * beta.squaredNorm();
}

}  // namespace

DesignMatrix::DesignMatrix(Eigen::MatrixXd values, bool has_intercept)
    : values_(std::move(values)), has_intercept_(has_intercept) {
  if (values_.rows() == 0 || values_.cols() == 0) {
    throw EmptyInputError("empty design matrix");
  }
  check_finite(values_, "design matrix");
}

DesignMatrix DesignMatrix::with_intercept(const Eigen::MatrixXd& predictors) {
  Eigen::MatrixXd values(predictors.rows(), predictors.cols() + 1);
  values.col(0).setOnes();
  values.rightCols(predictors.cols()) = predictors;
  return DesignMatrix(std::move(values), true);
}

DesignMatrix DesignMatrix::plain(Eigen::MatrixXd values) {
  return DesignMatrix(std::move(values), false);
}

LogisticFit fit_logistic(const DesignMatrix& x, const Eigen::VectorXd& y,
                         double ridge) {
  check_response_rows(x, y);
  check_binary(y);
  if (ridge < 0.0) throw DomainError("ridge must be >= 0");
  if (ridge == 0.0) check_full_rank(x, "fit_logistic");

  const Eigen::MatrixXd& xm = x.values();
  const Eigen::Index d = x.cols();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  double objective = penalized_deviance(xm, y, beta, ridge);

  LogisticFit fit;
  for (int iter = 1; iter <= kMaxIrlsIterations; ++iter) {
    fit.iterations = iter;
    const Eigen::ArrayXd eta = (xm * beta).array();
    const Eigen::ArrayXd p = eta.unaryExpr([](double e) { return expit(e); });
    const Eigen::VectorXd grad =
        xm.transpose() * (p - y.array()).matrix() + ridge * beta;
    const Eigen::ArrayXd w = (p * (1.0 - p)).max(1e-10);
    Eigen::MatrixXd hess = xm.transpose() * w.matrix().asDiagonal() * xm;
    hess.diagonal().array() += ridge;

    const Eigen::VectorXd direction = hess.ldlt().solve(-grad);
    if (!direction.allFinite()) {
      throw ConvergenceError(
          "fit_logistic: Newton step is not finite",
          std::vector<double>(beta.data(), beta.data() + beta.size()));
    }

    double step = 1.0;
    double next_objective = objective;
    Eigen::VectorXd next_beta = beta;
    bool accepted = false;
    while (step >= 1e-12) {
      const Eigen::VectorXd candidate = beta + step * direction;
      const double value = penalized_deviance(xm, y, candidate, ridge);
      if (value <= objective) {
        next_beta = candidate;
        next_objective = value;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // The descent direction cannot lower the objective at double
      // precision: we are at the numerical optimum.
      fit.converged = true;
      break;
    }
    const double improvement = objective - next_objective;
    beta = next_beta;
    objective = next_objective;
    if (improvement < kDevianceTolerance) {
      fit.converged = true;
      break;
    }
  }

  if (!fit.converged) {
    throw ConvergenceError(
        "fit_logistic: no convergence within iteration limit",
        std::vector<double>(beta.data(), beta.data() + beta.size()));
  }
  fit.coefficients = beta;
  fit.final_deviance = penalized_deviance(xm, y, beta, 0.0);
  return fit;
}

LinearFit fit_ols(const DesignMatrix& x, const Eigen::VectorXd& y) {
  check_response_rows(x, y);
  check_finite(y, "response");
  check_full_rank(x, "fit_ols");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.values());
  LinearFit fit;
  fit.coefficients = qr.solve(y);
  return fit;
}

Eigen::VectorXd predict_proba(const LogisticFit& fit, const DesignMatrix& x) {
  if (fit.coefficients.size() != x.cols()) {
    throw ShapeError("coefficient length does not match design columns");
  }
  return (x.values() * fit.coefficients)
      .array()
      .unaryExpr([](double e) { return expit(e); })
      .max(kProbabilityFloor)
      .min(1.0 - kProbabilityFloor)
      .matrix();
}

Eigen::VectorXd predict_linear(const LinearFit& fit, const DesignMatrix& x) {
  if (fit.coefficients.size() != x.cols()) {
    throw ShapeError("coefficient length does not match design columns");
  }
  return x.values() * fit.coefficients;
}

double fit_offset_logistic(const Eigen::VectorXd& offset,
                           const Eigen::VectorXd& h,
                           const Eigen::VectorXd& y) {
  const Eigen::Index n = offset.size();
  if (n == 0) throw EmptyInputError("fit_offset_logistic: empty input");
  if (h.size() != n || y.size() != n) {
    throw ShapeError("fit_offset_logistic: length mismatch");
  }
  check_finite(offset, "offset");
  check_finite(h, "fluctuation covariate");
  if ((y.array() < 0.0).any() || (y.array() > 1.0).any()) {
    throw DomainError("fit_offset_logistic: response outside [0, 1]");
  }
  if ((h.array() == 0.0).all()) {
    throw DegenerateCovariateError(
        "fit_offset_logistic: covariate is identically zero");
  }

  const double tolerance = 1e-8 * static_cast<double>(n);
  const auto score = [&](double eps) {
    return (h.array() *
            (y.array() - (offset.array() + eps * h.array())
                             .unaryExpr([](double e) { return expit(e); })))
        .sum();
  };

  double s0 = score(0.0);
  if (std::abs(s0) <= tolerance) return 0.0;

  // The score is strictly decreasing, so a positive score at 0 puts the
  // root to the right. Double outward until the sign flips or the bound is
  // hit; a bound hit with the sign unchanged means the score saturated.
  const double sign = s0 > 0.0 ? 1.0 : -1.0;
  double lo = 0.0;
  double hi = sign;
  for (;;) {
    if (std::abs(hi) > kEpsilonBound) hi = sign * kEpsilonBound;
    const double s = score(hi);
    if (std::abs(s) <= tolerance) return hi;
    if (s * sign < 0.0) break;
    if (std::abs(hi) >= kEpsilonBound) {
      throw ConvergenceError(
          "fit_offset_logistic: score does not reach tolerance within "
          "|epsilon| <= 30",
          {hi});
    }
    lo = hi;
    hi *= 2.0;
  }
  if (sign < 0.0) std::swap(lo, hi);  // keep lo < hi

  double eps = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double s = score(eps);
    if (std::abs(s) <= tolerance) return eps;
    if (s > 0.0) {
      lo = eps;
    } else {
      hi = eps;
    }
    const Eigen::ArrayXd p = (offset.array() + eps * h.array())
                                 .unaryExpr([](double e) { return expit(e); });
    const double curvature = (h.array().square() * p * (1.0 - p)).sum();
    double next = eps + s / curvature;  // score' = -curvature
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      next = 0.5 * (lo + hi);
    }
    eps = next;
  }
  throw ConvergenceError("fit_offset_logistic: Newton did not converge",
                         {eps});
}

}  // namespace pstmle
