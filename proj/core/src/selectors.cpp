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

#include "pstmle/selectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pstmle/errors.hpp"
#include "pstmle/glm.hpp"
#include "pstmle/rng.hpp"

namespace pstmle {
namespace {

constexpr std::uint64_t kFoldStream = 0xF01D;
constexpr std::uint64_t kSplitStreamBase = 0x5A17;

Eigen::VectorXd fit_ps_all_covariates(const Dataset& data, double ridge) {
  const DesignMatrix x = DesignMatrix::with_intercept(data.w);
  return predict_proba(fit_logistic(x, data.a, ridge), x);
}

std::size_t grid_index(const TruncationGrid& grid, double gamma) {
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (grid.gammas[g] == gamma) return g;
  }
  throw DomainError("gamma " + std::to_string(gamma) +
                    " is not a member of the truncation grid");
}

// Larger gamma wins ties, so scan ascending with <=.
std::size_t argmin_prefer_larger(const Eigen::VectorXd& values) {
  std::size_t best = 0;
  for (Eigen::Index g = 1; g < values.size(); ++g) {
    if (values[g] <= values[best]) best = static_cast<std::size_t>(g);
  }
  return best;
}

void check_grid(const TruncationGrid& grid) {
  if (grid.size() == 0) throw EmptyInputError("empty truncation grid");
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (!(grid.gammas[g] > grid.gammas[g - 1])) {
      throw DomainError("truncation grid must be strictly increasing");
    }
  }
}

void check_folds(Eigen::Index n, int num_folds) {
  if (num_folds < 2) throw DomainError("need at least two folds");
  if (n < 2 * static_cast<Eigen::Index>(num_folds)) {
    throw InsufficientDataError("need at least two rows per fold");
  }
}

Eigen::VectorXd unit_scale_checked(const OutcomeScaling& scaling,
                                   const Eigen::VectorXd& y) {
  Eigen::VectorXd scaled = scaling.to_unit(y);
  if ((scaled.array() < 0.0).any() || (scaled.array() > 1.0).any()) {
    throw DomainError("outcome outside the scaling range of the initial fit");
  }
  return scaled;
}

// Replays one fold: fluctuations are solved on the training split and the
// resulting predictions are carried to the validation split, whose
// quasi-binomial loss is recorded per grid level. Thresholds come from the
// training-split propensity scores.
Eigen::VectorXd fold_validation_losses(
    const Eigen::VectorXd& q0_train, const Eigen::VectorXd& a_train,
    const Eigen::VectorXd& y_train, const Eigen::VectorXd& ps_train,
    const Eigen::VectorXd& q0_valid, const Eigen::VectorXd& a_valid,
    const Eigen::VectorXd& y_valid, const Eigen::VectorXd& ps_valid,
    const TruncationGrid& grid, const std::vector<double>& stage_points) {
  const auto num_levels = grid.size();
  std::vector<double> thresholds(num_levels);
  for (std::size_t g = 0; g < num_levels; ++g) {
    thresholds[g] = empirical_quantile(ps_train, grid.gammas[g]);
  }

  const auto logit_clamped = [](const Eigen::VectorXd& q) {
    return q.array()
        .max(kOutcomeFloor)
        .min(1.0 - kOutcomeFloor)
        .unaryExpr([](double p) { return logit(p); })
        .matrix()
        .eval();
  };

  Eigen::VectorXd losses(static_cast<Eigen::Index>(num_levels));
  Eigen::VectorXd current_train = q0_train;
  Eigen::VectorXd current_valid = q0_valid;
  std::size_t next = 0;
  for (const double closing : stage_points) {
    const std::size_t pick = grid_index(grid, closing);
    if (pick < next) {
      throw DomainError("stage points must be strictly increasing");
    }
    const Eigen::VectorXd offset_train = logit_clamped(current_train);
    const Eigen::VectorXd offset_valid = logit_clamped(current_valid);
    Eigen::VectorXd picked_train;
    Eigen::VectorXd picked_valid;
    for (std::size_t g = next; g <= pick; ++g) {
      const Eigen::VectorXd h_train =
          clever_covariate(a_train, ps_train.cwiseMin(thresholds[g]));
      const double eps = fluctuation_epsilon(offset_train, h_train, y_train);
      const Eigen::VectorXd h_valid =
          clever_covariate(a_valid, ps_valid.cwiseMin(thresholds[g]));
      const Eigen::VectorXd q_valid =
          (offset_valid + eps * h_valid)
              .array()
              .unaryExpr([](double e) { return expit(e); })
              .matrix();
      losses[static_cast<Eigen::Index>(g)] =
          quasibinomial_loss(y_valid, q_valid);
      if (g == pick) {
        picked_train = (offset_train + eps * h_train)
                           .array()
                           .unaryExpr([](double e) { return expit(e); })
                           .matrix();
        picked_valid = q_valid;
      }
    }
    current_train = picked_train;
    current_valid = picked_valid;
    next = pick + 1;
  }
  if (next != num_levels) {
    throw DomainError("stage points do not cover the truncation grid");
  }
  return losses;
}

}  // namespace

FoldAssignment FoldAssignment::make(std::size_t n, int num_folds,
                                    std::uint64_t seed) {
  check_folds(static_cast<Eigen::Index>(n), num_folds);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed, kFoldStream);
  deterministic_shuffle(perm, rng);

  FoldAssignment folds;
  folds.num_folds = num_folds;
  folds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    folds.labels[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(num_folds));
  }
  return folds;
}

std::vector<std::size_t> FoldAssignment::fold_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == fold) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldAssignment::complement_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != fold) rows.push_back(i);
  }
  return rows;
}

double cv_select_gamma(const Dataset& data, const TruncationGrid& grid,
                       int num_folds, std::uint64_t seed,
                       const SelectorConfig& config) {
  data.validate();
  check_grid(grid);
  const auto n = static_cast<std::size_t>(data.size());
  const FoldAssignment folds = FoldAssignment::make(n, num_folds, seed);

  Eigen::VectorXd losses =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  for (int v = 0; v < num_folds; ++v) {
    const Dataset train = data.rows(folds.complement_rows(v));
    const Dataset valid = data.rows(folds.fold_rows(v));
    const DesignMatrix x_train = DesignMatrix::with_intercept(train.w);
    const LogisticFit fit = fit_logistic(x_train, train.a, config.ridge);
    const Eigen::VectorXd p_train = predict_proba(fit, x_train);
    const Eigen::VectorXd p_valid =
        predict_proba(fit, DesignMatrix::with_intercept(valid.w));

    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double cap = empirical_quantile(p_train, grid.gammas[g]);
      const Eigen::ArrayXd capped = p_valid.cwiseMin(cap).array();
      losses[static_cast<Eigen::Index>(g)] +=
          -(valid.a.array() * capped.log() +
            (1.0 - valid.a.array()) * (1.0 - capped).log())
               .mean();
    }
  }
  losses /= static_cast<double>(num_folds);
  return grid.gammas[argmin_prefer_larger(losses)];
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> mv_half_split(
    std::size_t n, int repeat, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed, kSplitStreamBase + static_cast<std::uint64_t>(repeat));
  deterministic_shuffle(perm, rng);
  std::vector<std::size_t> half1(perm.begin(), perm.begin() + n / 2);
  std::vector<std::size_t> half2(perm.begin() + n / 2, perm.end());
  std::sort(half1.begin(), half1.end());
  std::sort(half2.begin(), half2.end());
  return {std::move(half1), std::move(half2)};
}

double mv_select_gamma(const Dataset& data, const TruncationGrid& grid,
                       int num_repeats, std::uint64_t seed,
                       const SelectorConfig& config,
                       const Eigen::VectorXd* full_ps) {
  data.validate();
  check_grid(grid);
  if (num_repeats < 1) throw DomainError("need at least one half-split");
  const auto n = static_cast<std::size_t>(data.size());
  if (n < 4) {
    throw InsufficientDataError("need at least four rows for half-splits");
  }

  const Eigen::VectorXd ps =
      full_ps ? *full_ps : fit_ps_all_covariates(data, config.ridge);
  const OutcomeFit initial =
      fit_initial_outcome(data, config.outcome_columns);

  const auto num_levels = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd variance(num_levels);
  for (Eigen::Index g = 0; g < num_levels; ++g) {
    const TmleResult full = tmle_estimate(
        data, truncate_upper(ps, grid.gammas[static_cast<std::size_t>(g)]),
        initial);
    variance[g] = full.estimate.se * full.estimate.se;
  }

  Eigen::VectorXd squared_gap = Eigen::VectorXd::Zero(num_levels);
  int successes = 0;
  for (int rep = 0; rep < num_repeats; ++rep) {
    const auto [half1, half2] = mv_half_split(n, rep, seed);
    try {
      const Dataset d1 = data.rows(half1);
      const Dataset d2 = data.rows(half2);
      const Eigen::VectorXd ps1 = fit_ps_all_covariates(d1, config.ridge);
      const Eigen::VectorXd ps2 = fit_ps_all_covariates(d2, config.ridge);
      const OutcomeFit q1 = fit_initial_outcome(d1, config.outcome_columns);
      const OutcomeFit q2 = fit_initial_outcome(d2, config.outcome_columns);
      const double reference =
          tmle_estimate(d2, truncate_upper(ps2, 1.0), q2).estimate.psi;
      Eigen::VectorXd rep_gap(num_levels);
      for (Eigen::Index g = 0; g < num_levels; ++g) {
        const double truncated =
            tmle_estimate(
                d1,
                truncate_upper(ps1, grid.gammas[static_cast<std::size_t>(g)]),
                q1)
                .estimate.psi;
        const double gap = truncated - reference;
        rep_gap[g] = gap * gap;
      }
      squared_gap += rep_gap;
      ++successes;
    } catch (const Error&) {
      // A half-split whose nuisance fit fails contributes nothing.
    }
  }
  if (successes == 0) {
    throw ConvergenceError("mv_select_gamma: every half-split failed", {});
  }
  const Eigen::VectorXd mse =
      variance + squared_gap / static_cast<double>(successes);
  return grid.gammas[argmin_prefer_larger(mse)];
}

CandidateSequence generate_candidates(
    const OutcomeFit& initial, const Dataset& data, const TruncationGrid& grid,
    const std::optional<std::vector<double>>& stage_points,
    const Eigen::VectorXd* ps, double ridge) {
  data.validate();
  check_grid(grid);
  if (initial.q_observed.size() != data.size()) {
    throw ShapeError("initial fit length does not match data");
  }

  const Eigen::VectorXd propensity =
      ps ? *ps : fit_ps_all_covariates(data, ridge);
  if (propensity.size() != data.size()) {
    throw ShapeError("propensity vector length does not match data");
  }
  const Eigen::VectorXd y_scaled =
      unit_scale_checked(initial.scaling, data.y);

  const auto num_levels = grid.size();
  std::vector<double> thresholds(num_levels);
  for (std::size_t g = 0; g < num_levels; ++g) {
    thresholds[g] = empirical_quantile(propensity, grid.gammas[g]);
  }

  CandidateSequence sequence;
  sequence.candidates.resize(num_levels);

  OutcomeFit current = initial;
  std::size_t next = 0;
  std::size_t replay_cursor = 0;
  int stage = 1;
  while (next < num_levels) {
    std::vector<OutcomeFit> fits(num_levels);
    std::vector<double> losses(num_levels, 0.0);
    std::size_t pick = 0;
    if (!stage_points) {
      bool have_best = false;
      for (std::size_t g = next; g < num_levels; ++g) {
        fits[g] = fluctuate(current, data.a,
                            propensity.cwiseMin(thresholds[g]), y_scaled);
        losses[g] = quasibinomial_loss(y_scaled, fits[g].q_observed);
        if (!have_best || losses[g] <= losses[pick]) {
          pick = g;
          have_best = true;
        }
      }
    } else {
      if (replay_cursor >= stage_points->size()) {
        throw DomainError("stage points do not cover the truncation grid");
      }
      pick = grid_index(grid, (*stage_points)[replay_cursor++]);
      if (pick < next) {
        throw DomainError("stage points must be strictly increasing");
      }
      for (std::size_t g = next; g <= pick; ++g) {
        fits[g] = fluctuate(current, data.a,
                            propensity.cwiseMin(thresholds[g]), y_scaled);
        losses[g] = quasibinomial_loss(y_scaled, fits[g].q_observed);
      }
    }

    for (std::size_t g = next; g <= pick; ++g) {
      TmleCandidate& candidate = sequence.candidates[g];
      candidate.gamma = grid.gammas[g];
      candidate.stage = stage;
      candidate.empirical_loss = losses[g];
      candidate.targeted = std::move(fits[g]);
      candidate.ps_truncated = propensity.cwiseMin(thresholds[g]);
    }
    current = sequence.candidates[pick].targeted;
    sequence.stage_points.push_back(grid.gammas[pick]);
    next = pick + 1;
    ++stage;
  }
  if (stage_points && replay_cursor != stage_points->size()) {
    throw DomainError("unused stage points beyond the grid maximum");
  }
  return sequence;
}

CtmleResult ctmle_select(const OutcomeFit& initial, const Dataset& data,
                         const TruncationGrid& grid, int num_folds,
                         std::uint64_t seed, const Eigen::VectorXd* full_ps,
                         const SelectorConfig& config) {
  data.validate();
  check_grid(grid);
  const auto n = static_cast<std::size_t>(data.size());
  check_folds(data.size(), num_folds);

  const Eigen::VectorXd ps =
      full_ps ? *full_ps : fit_ps_all_covariates(data, config.ridge);
  const CandidateSequence sequence =
      generate_candidates(initial, data, grid, std::nullopt, &ps, config.ridge);
  const Eigen::VectorXd y_scaled =
      unit_scale_checked(initial.scaling, data.y);

  const FoldAssignment folds = FoldAssignment::make(n, num_folds, seed);
  Eigen::VectorXd cv_losses =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  for (int v = 0; v < num_folds; ++v) {
    const std::vector<std::size_t> train_rows = folds.complement_rows(v);
    const std::vector<std::size_t> valid_rows = folds.fold_rows(v);
    const Dataset train = data.rows(train_rows);
    const Dataset valid = data.rows(valid_rows);
    const OutcomeFit q0_train = subset_rows(initial, train_rows);
    const OutcomeFit q0_valid = subset_rows(initial, valid_rows);
    const LogisticFit fit = fit_logistic(DesignMatrix::with_intercept(train.w),
                                         train.a, config.ridge);
    const Eigen::VectorXd p_train =
        predict_proba(fit, DesignMatrix::with_intercept(train.w));
    const Eigen::VectorXd p_valid =
        predict_proba(fit, DesignMatrix::with_intercept(valid.w));
    cv_losses += fold_validation_losses(
        q0_train.q_observed, train.a, initial.scaling.to_unit(train.y),
        p_train, q0_valid.q_observed, valid.a,
        initial.scaling.to_unit(valid.y), p_valid, grid,
        sequence.stage_points);
  }
  cv_losses /= static_cast<double>(num_folds);

  const std::size_t winner = argmin_prefer_larger(cv_losses);
  const double gamma_winner = grid.gammas[winner];

  // Re-target the winning stage's initial fit at every level up to and
  // including the winner; keep the smallest empirical loss (ties to the
  // larger gamma).
  const int winner_stage = sequence.candidates[winner].stage;
  const OutcomeFit& stage_initial =
      winner_stage == 1
          ? initial
          : sequence
                .candidates[grid_index(
                    grid,
                    sequence.stage_points[static_cast<std::size_t>(
                        winner_stage - 2)])]
                .targeted;

  OutcomeFit best_fit;
  std::size_t best_level = 0;
  double best_loss = 0.0;
  bool have_best = false;
  for (std::size_t g = 0; g <= winner; ++g) {
    OutcomeFit fit = fluctuate(stage_initial, data.a,
                               sequence.candidates[g].ps_truncated, y_scaled);
    const double loss = quasibinomial_loss(y_scaled, fit.q_observed);
    if (!have_best || loss <= best_loss) {
      best_fit = std::move(fit);
      best_level = g;
      best_loss = loss;
      have_best = true;
    }
  }

  const double psi = initial.scaling.range() *
                     (best_fit.q_treated - best_fit.q_control).mean();
  const Eigen::VectorXd ic = influence_curve(
      data, sequence.candidates[best_level].ps_truncated, best_fit, psi);
  const IntervalScale scale = ic_confidence_interval(ic, 0.95);

  CtmleResult result;
  result.gamma = gamma_winner;
  result.targeted = best_fit;
  result.estimate.psi = psi;
  result.estimate.se = scale.se;
  result.estimate.ci_lower = psi + scale.lower_offset;
  result.estimate.ci_upper = psi + scale.upper_offset;
  result.estimate.method = "ctmle";
  result.estimate.gamma = gamma_winner;
  result.estimate.diagnostics["epsilon"] = best_fit.epsilons.back();
  result.estimate.diagnostics["retarget_gamma"] = grid.gammas[best_level];
  result.estimate.diagnostics["cv_loss"] =
      cv_losses[static_cast<Eigen::Index>(winner)];
  result.estimate.diagnostics["stages"] =
      static_cast<double>(sequence.stage_points.size());
  result.estimate.diagnostics["max_weight"] =
      clever_covariate(data.a, sequence.candidates[best_level].ps_truncated)
          .array()
          .abs()
          .maxCoeff();
  return result;
}

}  // namespace pstmle
