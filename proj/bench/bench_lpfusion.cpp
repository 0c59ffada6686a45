/*
 * Copyright 2026 The lpfusion Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// Serial reference paths against their OpenMP counterparts. The second
// argument selects the path: 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lpfusion/fusion.hpp"
#include "lpfusion/kernels.hpp"
#include "lpfusion/log.hpp"

using namespace lpfusion;

namespace {

Matrix gaussian(Index n, Index f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix x(n, f);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < f; ++j) x(i, j) = g(rng);
  return x;
}

Exec exec_of(const benchmark::State& state) { return state.range(1) ? Exec::kParallel : Exec::kSerial; }

void BM_RbfGram(benchmark::State& state) {
  const Matrix x = gaussian(state.range(0), 8, 1);
  const KernelSpec spec = KernelSpec::from_grid(1.0, kernel_width_base(x));
  for (auto _ : state) benchmark::DoNotOptimize(rbf_gram_matrix(x, spec, exec_of(state)));
}

void BM_RbfCross(benchmark::State& state) {
  const Matrix x = gaussian(state.range(0), 8, 2);
  const Matrix y = gaussian(state.range(0) / 2, 8, 3);
  const KernelSpec spec = KernelSpec::from_grid(1.0, kernel_width_base(x));
  for (auto _ : state) benchmark::DoNotOptimize(rbf_kernel_matrix(y, x, spec, exec_of(state)));
}

struct Problem {
  ScoreMatrix scores;
  Matrix features;
  std::vector<int> labels;
};

Problem local_problem(Index n) {
  Problem p;
  p.features = gaussian(n, 4, 4);
  p.scores.values = gaussian(n, 4, 5).cwiseAbs();
  for (int j = 0; j < 4; ++j) p.scores.learner_ids.push_back("l" + std::to_string(j));
  p.scores.stage = ScoreStage::kNormalized;
  p.labels.assign(static_cast<std::size_t>(n), 1);
  return p;
}

void BM_LocalInteriorPoint(benchmark::State& state) {
  const Problem p = local_problem(state.range(0));
  OptimizerConfig c;
  c.p_base = 2.0;
  c.max_epochs = 20;
  c.tolerance = 1e-12;
  for (auto _ : state)
    benchmark::DoNotOptimize(optimize_interior_point(p.scores, p.features, p.labels, c, exec_of(state)));
}

void BM_TestTimeWeights(benchmark::State& state) {
  const Problem p = local_problem(state.range(0));
  OptimizerConfig c;
  c.p_base = 2.0;
  c.max_epochs = 5;
  const LocalWeightSet ws = optimize_interior_point(p.scores, p.features, p.labels, c).weights;
  const Matrix test = gaussian(state.range(0), 4, 6);
  const AnchorRule rule{10, true, true, 1.0 / 3.0};
  for (auto _ : state) benchmark::DoNotOptimize(test_time_weights(ws, rule, test, exec_of(state)));
}

}  // namespace

BENCHMARK(BM_RbfGram)->ArgsProduct({{256, 1024}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RbfCross)->ArgsProduct({{256, 1024}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LocalInteriorPoint)->ArgsProduct({{500, 2000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TestTimeWeights)->ArgsProduct({{500, 2000}, {0, 1}})->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  log::set_level(log::Level::kError);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
