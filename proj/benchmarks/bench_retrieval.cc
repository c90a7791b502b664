#include <benchmark/benchmark.h>

#include "duet/retrieval.hpp"
#include "duet/rng.hpp"

namespace {

using namespace duet;

RetrievalIndex big_index(std::size_t m, std::size_t d) {
  Rng rng(1);
  Matrix emb(m, d);
  for (std::size_t r = 0; r < m; ++r) {
    auto row = emb.row(r);
    for (double& v : row) v = rng.normal();
    normalize_in_place(row);
  }
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < m; ++i) ids.push_back("v" + std::to_string(i));
  return make_index(std::move(ids), std::move(emb));
}

void BM_TopK(benchmark::State& state) {
  auto m = static_cast<std::size_t>(state.range(0));
  RetrievalIndex index = big_index(m, 64);
  Rng rng(2);
  std::vector<double> query(64);
  for (double& v : query) v = rng.normal();
  normalize_in_place(query);

  for (auto _ : state) {
    RankedResult r = topk(query, index, 10);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m));
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(10000)->Arg(100000);

}  // namespace
