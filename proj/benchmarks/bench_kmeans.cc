#include <benchmark/benchmark.h>

#include "duet/kmeans.hpp"
#include "duet/rng.hpp"

namespace {

using namespace duet;

void BM_Kmeans(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  auto k = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  Matrix points(n, 16);
  for (double& v : points.values()) v = rng.normal();

  for (auto _ : state) {
    ClusterIndex index = kmeans(points, k, 25, 7);
    benchmark::DoNotOptimize(index.centroids.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Kmeans)->Args({1000, 16})->Args({4000, 64});

}  // namespace
