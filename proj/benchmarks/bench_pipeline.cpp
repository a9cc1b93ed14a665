// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "vrf/ensembling.hpp"
#include "vrf/prediction.hpp"
#include "vrf/weighting.hpp"

namespace {

vrf::MatrixF random_logits(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 3.0f);
  vrf::MatrixF m(rows, cols);
  for (auto& v : m.values()) v = normal(rng);
  return m;
}

std::vector<double> random_distances(std::size_t n) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<double> d(n);
  for (auto& x : d) x = u(rng);
  return d;
}

void BM_SigmoidWeights(benchmark::State& state) {
  const auto d = random_distances(static_cast<std::size_t>(state.range(0)));
  const vrf::WeightFunction fn = vrf::SigmoidWeight{1.5, 0.6};
  for (auto _ : state) benchmark::DoNotOptimize(vrf::weight_batch(fn, d));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

// Args: samples, classes, space (0 prob, 1 logit).
void BM_Ensemble(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto space = state.range(2) == 0 ? vrf::EnsembleSpace::kProb : vrf::EnsembleSpace::kLogit;
  const auto zs = random_logits(n, k, 5), ft = random_logits(n, k, 6);
  const auto w = vrf::weight_batch(vrf::SigmoidWeight{1.5, 0.6}, random_distances(n));
  for (auto _ : state) benchmark::DoNotOptimize(vrf::ensemble(space, zs, ft, w));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_FitTemperature(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto logits = random_logits(n, 10, 7);
  std::vector<std::uint32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint32_t>(i % 10);
  for (auto _ : state) benchmark::DoNotOptimize(vrf::fit_temperature(logits, labels));
}

BENCHMARK(BM_SigmoidWeights)->Arg(50000);
BENCHMARK(BM_Ensemble)->Args({50000, 1000, 0})->Args({50000, 1000, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitTemperature)->Arg(50000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
