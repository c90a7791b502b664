#include <benchmark/benchmark.h>

#include <cmath>

#include "duet/loss.hpp"
#include "duet/rng.hpp"

namespace {

using namespace duet;

Matrix unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = m.row(r);
    for (double& v : row) v = rng.normal();
    normalize_in_place(row);
  }
  return m;
}

void BM_ContrastiveLoss(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  Matrix x = unit_rows(n, 64, 1);
  Matrix y = unit_rows(n, 64, 2);
  LossConfig cfg{0.1, 1.0};

  for (auto _ : state) {
    LossOutput out = contrastive_loss(x, y, Temperature{}, cfg);
    benchmark::DoNotOptimize(out.total);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ContrastiveLoss)->Arg(16)->Arg(64)->Arg(256);

void BM_ContrastiveLossMasked(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  Matrix x = unit_rows(n, 64, 3);
  Matrix y = unit_rows(n, 64, 4);
  LossConfig cfg{0.1, 0.5};

  for (auto _ : state) {
    LossOutput out = contrastive_loss(x, y, Temperature{}, cfg, 7);
    benchmark::DoNotOptimize(out.total);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ContrastiveLossMasked)->Arg(64);

void BM_SimilarityMatrix(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  Matrix x = unit_rows(n, 64, 5);
  Matrix y = unit_rows(n, 64, 6);
  for (auto _ : state) {
    Matrix s = similarity_matrix(x, y);
    benchmark::DoNotOptimize(s.data());
  }
}
BENCHMARK(BM_SimilarityMatrix)->Arg(64)->Arg(256);

}  // namespace
