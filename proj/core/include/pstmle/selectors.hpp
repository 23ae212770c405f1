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

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pstmle/dataset.hpp"
#include "pstmle/estimators.hpp"
#include "pstmle/truncation.hpp"

namespace pstmle {

// Nuisance refits performed inside a selector (cross-validation folds,
// half splits) use these settings. The small default ridge keeps split
// fits finite when a subsample is separable.
struct SelectorConfig {
  std::vector<int> outcome_columns;  // empty = all covariates
  double ridge = 1e-8;
};

// Deterministic fold labels: a seeded Fisher-Yates permutation dealt
// round-robin, so fold sizes differ by at most one.
struct FoldAssignment {
  std::vector<int> labels;
  int num_folds = 0;

  static FoldAssignment make(std::size_t n, int num_folds,
                             std::uint64_t seed);
  std::vector<std::size_t> fold_rows(int fold) const;
  std::vector<std::size_t> complement_rows(int fold) const;
};

// The `repeat`-th random half-split used by mv_select_gamma: a seeded
// Fisher-Yates permutation of 0..n-1 cut at n/2, both halves sorted
// ascending. Exposed so the split pattern is a testable part of the
// selector contract.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> mv_half_split(
    std::size_t n, int repeat, std::uint64_t seed);

// Cross-validated selector: picks the truncation level whose truncated,
// train-fitted propensity scores have the smallest average validation
// negative Bernoulli log-likelihood. Ties resolve to the larger gamma.
double cv_select_gamma(const Dataset& data, const TruncationGrid& grid,
                       int num_folds, std::uint64_t seed,
                       const SelectorConfig& config = {});

// Mean-squared-error proxy selector: for every gamma combines the squared
// influence-curve standard error of the full-data TMLE (variance term)
// with an average over random half-splits of the squared gap between the
// truncated TMLE on one half and the untruncated TMLE on the other (bias
// term). Splits whose nuisance fits fail are skipped. `full_ps` optionally
// supplies precomputed full-data propensity scores for the variance term.
double mv_select_gamma(const Dataset& data, const TruncationGrid& grid,
                       int num_repeats, std::uint64_t seed,
                       const SelectorConfig& config = {},
                       const Eigen::VectorXd* full_ps = nullptr);

// One targeted candidate per grid level, produced by the staged greedy
// construction: within a stage every remaining level fluctuates the same
// running fit; the level with the smallest empirical loss closes the stage
// and its targeted fit seeds the next one. Candidates at or below the
// closing level inherit the current stage index.
struct TmleCandidate {
  double gamma = 0.0;
  int stage = 0;
  double empirical_loss = 0.0;  // quasi-binomial, training data
  OutcomeFit targeted;
  Eigen::VectorXd ps_truncated;
};

struct CandidateSequence {
  std::vector<TmleCandidate> candidates;  // one per grid level, ascending
  std::vector<double> stage_points;       // closing gamma of each stage
};

// When `stage_points` is given the greedy search is skipped and the stages
// replay the supplied closing levels (they must be grid members, strictly
// increasing, and end at the grid maximum). `ps` optionally supplies
// precomputed propensity scores; otherwise a main-terms logistic model is
// fitted on all covariates with config.ridge.
CandidateSequence generate_candidates(
    const OutcomeFit& initial, const Dataset& data, const TruncationGrid& grid,
    const std::optional<std::vector<double>>& stage_points = std::nullopt,
    const Eigen::VectorXd* ps = nullptr, double ridge = 1e-8);

struct CtmleResult {
  AteEstimate estimate;
  double gamma = 0.0;  // cross-validation winner
  OutcomeFit targeted;
};

// Collaborative selector: builds full-data candidates, scores them by
// V-fold cross-validated validation loss with the stage pattern replayed
// per fold, picks the loss-minimizing gamma (ties to the larger value),
// then re-targets that stage's initial fit at every gamma up to and
// including the winner and keeps the re-targeted fit with the smallest
// empirical loss. The confidence interval uses the influence curve at the
// re-targeting level actually kept.
CtmleResult ctmle_select(const OutcomeFit& initial, const Dataset& data,
                         const TruncationGrid& grid, int num_folds,
                         std::uint64_t seed,
                         const Eigen::VectorXd* full_ps = nullptr,
                         const SelectorConfig& config = {});

}  // namespace pstmle
