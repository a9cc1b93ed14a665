// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "vrf/knn.hpp"
#include "vrf/prediction.hpp"

namespace {

vrf::MatrixF unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;
  vrf::MatrixF m(rows, cols);
  for (auto& v : m.values()) v = normal(rng);
  return vrf::normalize_features(m);
}

const vrf::KnnSearcher& searcher(std::size_t members, std::size_t dim) {
  static std::size_t cached_m = 0, cached_d = 0;
  static vrf::KnnSearcher s;
  if (cached_m != members || cached_d != dim) {
    s = vrf::KnnSearcher(unit_rows(members, dim, 1));
    cached_m = members;
    cached_d = dim;
  }
  return s;
}

// Args: members, dim, k. Reported time is per query block of 64.
void BM_KnnBatch(benchmark::State& state) {
  const auto& s = searcher(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto queries = unit_rows(64, s.dim(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(s.kth_distances(queries, k));
  state.SetItemsProcessed(state.iterations() * 64);
}

void BM_KnnSingle(benchmark::State& state) {
  const auto& s = searcher(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto queries = unit_rows(16, s.dim(), 3);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(s.kth_distance(queries.row(i), k));
    i = (i + 1) % queries.rows();
  }
  state.SetItemsProcessed(state.iterations());
}

BENCHMARK(BM_KnnBatch)
    ->Args({100000, 512, 1})
    ->Args({100000, 512, 100})
    ->Args({100000, 512, 512})
    ->Args({10000, 512, 10})
    ->Args({100000, 64, 100})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KnnSingle)->Args({100000, 512, 100})->Args({10000, 512, 10})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
