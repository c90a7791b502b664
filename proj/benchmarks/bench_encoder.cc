#include <benchmark/benchmark.h>

#include "duet/encoder.hpp"
#include "duet/rng.hpp"

namespace {

using namespace duet;

void BM_EncodeImage(benchmark::State& state) {
  auto batch = static_cast<std::size_t>(state.range(0));
  EncoderParams params = init_params(16, 32, 32, 64, 4096, 1);
  Rng rng(2);
  Matrix feats(batch, 16);
  for (double& v : feats.values()) v = rng.normal();

  for (auto _ : state) {
    Matrix emb = encode_image(feats, params);
    benchmark::DoNotOptimize(emb.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_EncodeImage)->Arg(16)->Arg(64)->Arg(256);

void BM_EncodeText(benchmark::State& state) {
  auto batch = static_cast<std::size_t>(state.range(0));
  EncoderParams params = init_params(16, 32, 32, 64, 4096, 1);
  Rng rng(3);
  std::vector<std::vector<int>> tokens(batch);
  for (auto& seq : tokens) {
    std::size_t len = 3 + rng.uniform_int(18);
    for (std::size_t t = 0; t < len; ++t)
      seq.push_back(1 + static_cast<int>(rng.uniform_int(4095)));
  }

  for (auto _ : state) {
    Matrix emb = encode_text(tokens, params);
    benchmark::DoNotOptimize(emb.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_EncodeText)->Arg(16)->Arg(64)->Arg(256);

void BM_ImageBackward(benchmark::State& state) {
  auto batch = static_cast<std::size_t>(state.range(0));
  EncoderParams params = init_params(16, 32, 32, 64, 4096, 1);
  Rng rng(4);
  Matrix feats(batch, 16);
  for (double& v : feats.values()) v = rng.normal();
  ImageCache cache;
  encode_image(feats, params, &cache);
  Matrix upstream(batch, 64);
  for (double& v : upstream.values()) v = rng.normal();

  for (auto _ : state) {
    EncoderGrads grads = EncoderGrads::zeros_like(params);
    image_backward(upstream, cache, params, grads);
    benchmark::DoNotOptimize(grads.img_w1.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ImageBackward)->Arg(64);

}  // namespace
