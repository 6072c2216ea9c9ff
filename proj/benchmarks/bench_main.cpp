#include <benchmark/benchmark.h>

#include "nightcast/codec.hpp"
#include "nightcast/metrics.hpp"
#include "nightcast/stgnn.hpp"

using namespace nightcast;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

void BM_conv2d_forward(benchmark::State& state) {
  const long n = state.range(0);
  Rng rng(1);
  Tensor x = random_tensor({n, 32, 32, 32}, rng);
  Tensor w = random_tensor({32, 32, 3, 3}, rng, -0.1, 0.1);
  Tensor b = random_tensor({32}, rng, -0.1, 0.1);
  for (auto _ : state) {
    Tape tape(/*grad_enabled=*/false);
    Var y = tape.conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 1, 1);
    benchmark::DoNotOptimize(y.value().data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

void BM_encode(benchmark::State& state) {
  CodecConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 8;
  cfg.embedding_size = 32;
  cfg.input_h = cfg.input_w = 32;
  Rng rng(2);
  Codec codec(cfg, rng);
  Tensor images = random_tensor({64, 1, 32, 32}, rng);
  for (auto _ : state) {
    Tensor emb = codec.encode_batch(images, 32);
    benchmark::DoNotOptimize(emb.data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}

void BM_stgnn_forward(benchmark::State& state) {
  const long v = state.range(0);
  StgnnConfig cfg;
  cfg.layers = 4;
  cfg.dilations = {1, 2, 1, 2};
  cfg.residual_channels = 16;
  cfg.skip_channels = 32;
  cfg.input_width = 40;
  cfg.output_width = 32;
  Rng rng(3);
  Tensor support = Tensor::full({v, v}, 1.0 / static_cast<double>(v));
  Stgnn net(cfg, v, {support, support}, rng);
  Tensor z = random_tensor({v, 8, 40}, rng, -1.0, 1.0);
  for (auto _ : state) {
    Tape tape(/*grad_enabled=*/false);
    Var y = net.forward_single(tape, tape.constant(z));
    benchmark::DoNotOptimize(y.value().data());
  }
}

void BM_adaptive_adjacency(benchmark::State& state) {
  const long v = state.range(0);
  StgnnConfig cfg;
  cfg.layers = 1;
  cfg.dilations = {1};
  cfg.input_width = 8;
  cfg.output_width = 8;
  cfg.use_static_supports = false;
  Rng rng(4);
  Stgnn net(cfg, v, {}, rng);
  for (auto _ : state) {
    Tape tape(/*grad_enabled=*/false);
    Var a = net.adaptive_adjacency(tape);
    benchmark::DoNotOptimize(a.value().data());
  }
}

void BM_percent_of_normal(benchmark::State& state) {
  Rng rng(5);
  RasterTile day;
  day.county_id = "c";
  day.radiance = random_tensor({128, 128}, rng, 0.0, 50.0);
  std::vector<RasterTile> comps(3);
  for (auto& c : comps) {
    c.county_id = "c";
    c.radiance = random_tensor({128, 128}, rng, 1.0, 50.0);
  }
  std::vector<const RasterTile*> ptrs{&comps[0], &comps[1], &comps[2]};
  for (auto _ : state) {
    OutageMap m = percent_of_normal(day, ptrs);
    benchmark::DoNotOptimize(m.percent_normal.data());
  }
}

}  // namespace

BENCHMARK(BM_conv2d_forward)->Arg(8)->Arg(64);
BENCHMARK(BM_encode);
BENCHMARK(BM_stgnn_forward)->Arg(8)->Arg(67);
BENCHMARK(BM_adaptive_adjacency)->Arg(67);
BENCHMARK(BM_percent_of_normal);

BENCHMARK_MAIN();
