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

#include <benchmark/benchmark.h>

#include "pstmle/estimators.hpp"
#include "pstmle/glm.hpp"
#include "pstmle/selectors.hpp"
#include "pstmle/simulation.hpp"
#include "pstmle/truncation.hpp"

namespace {

using namespace pstmle;

DgpConfig bench_config(Eigen::Index n) {
  DgpConfig config;
  config.c = 1.0;
  config.n = n;
  config.seed = 7;
  return config;
}

void BM_SampleDataset(benchmark::State& state) {
  const DgpConfig config = bench_config(state.range(0));
  std::uint64_t replication = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_dataset(config, replication++));
  }
}
BENCHMARK(BM_SampleDataset)->Arg(200)->Arg(1000);

void BM_FitLogistic(benchmark::State& state) {
  const Dataset data = sample_dataset(bench_config(state.range(0)), 0);
  const DesignMatrix x = DesignMatrix::with_intercept(data.w);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_logistic(x, data.a, 0.0));
  }
}
BENCHMARK(BM_FitLogistic)->Arg(200)->Arg(1000);

void BM_TmleEstimate(benchmark::State& state) {
  const Dataset data = sample_dataset(bench_config(state.range(0)), 0);
  const DesignMatrix x = DesignMatrix::with_intercept(data.w);
  const Eigen::VectorXd ps = predict_proba(fit_logistic(x, data.a, 0.0), x);
  const Eigen::VectorXd ps_truncated = truncate_upper(ps, 0.9);
  const OutcomeFit initial =
      fit_initial_outcome(data, {2, 3, 4, 5, 6, 7, 8, 9});
  for (auto _ : state) {
    benchmark::DoNotOptimize(tmle_estimate(data, ps_truncated, initial));
  }
}
BENCHMARK(BM_TmleEstimate)->Arg(200)->Arg(1000);

void BM_GenerateCandidates(benchmark::State& state) {
  const Dataset data = sample_dataset(bench_config(state.range(0)), 0);
  const DesignMatrix x = DesignMatrix::with_intercept(data.w);
  const Eigen::VectorXd ps = predict_proba(fit_logistic(x, data.a, 0.0), x);
  const OutcomeFit initial =
      fit_initial_outcome(data, {2, 3, 4, 5, 6, 7, 8, 9});
  const TruncationGrid grid = make_grid();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        generate_candidates(initial, data, grid, std::nullopt, &ps));
  }
}
BENCHMARK(BM_GenerateCandidates)->Arg(200)->Arg(1000);

void BM_CtmleSelect(benchmark::State& state) {
  const Dataset data = sample_dataset(bench_config(state.range(0)), 0);
  const DesignMatrix x = DesignMatrix::with_intercept(data.w);
  const Eigen::VectorXd ps = predict_proba(fit_logistic(x, data.a, 0.0), x);
  const OutcomeFit initial =
      fit_initial_outcome(data, {2, 3, 4, 5, 6, 7, 8, 9});
  const TruncationGrid grid = make_grid();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ctmle_select(initial, data, grid, 5, 11, &ps));
  }
}
BENCHMARK(BM_CtmleSelect)->Arg(200)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
