#include <benchmark/benchmark.h>

#include "georeg/attention.hpp"
#include "georeg/config.hpp"
#include "georeg/model.hpp"
#include "georeg/ops.hpp"
#include "georeg/runner.hpp"
#include "georeg/synth.hpp"
#include "georeg/warp.hpp"

using namespace georeg;

namespace {

ad::Tensor<float> random_tensor(const ad::Shape& shape, std::uint64_t seed) {
  ad::Rng rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(ad::shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return ad::Tensor<float>::from(shape, std::move(v));
}

RunConfig mnist_config() {
  RunConfig c;
  c.channels = {16, 32, 64};
  c.tau_k_target = {3, 3, 3};
  finalize(c);
  return c;
}

RunConfig synth_config() {
  RunConfig c;
  c.channels = {8, 16, 32, 32};
  c.dataset = "synthetic";
  c.synth_size = 64;
  c.synth.rotation_deg = 15;
  c.synth.octaves = 3;
  c.synth.amplitude = 2;
  finalize(c);
  return c;
}

void perturb_heads(ModelParams<float>& p) {
  ad::Rng rng(3);
  std::uniform_real_distribution<float> d(-0.1f, 0.1f);
  for_each_param(p, [&](const std::string& name, ad::Tensor<float>& t) {
    if (name.ends_with(".head"))
      for (auto& x : t.mutable_values()) x = d(rng);
  });
}

}  // namespace

static void Conv2d(benchmark::State& state) {
  const auto c = std::size_t(state.range(0)), hw = std::size_t(state.range(1));
  auto x = random_tensor({c, hw, hw}, 1);
  auto w = random_tensor({c, c, 3, 3}, 2);
  for (auto _ : state) {
    auto y = ad::conv2d(x, w, ad::Tensor<float>(), 1);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(Conv2d)->Args({16, 28})->Args({32, 14})->Args({8, 64})->Unit(benchmark::kMicrosecond);

static void LocalAttention(benchmark::State& state) {
  const auto d = std::size_t(state.range(0)), hw = std::size_t(state.range(1)), k = std::size_t(state.range(2));
  ad::Rng rng(4);
  auto params = init_attention<float>(d, d, d, rng);
  auto proj = ad::kaiming_uniform<float>({24, d}, 24, rng);
  GridSpec grid{1, hw, hw};
  auto feats = random_tensor({hw * hw, d}, 5);
  std::vector<float> q(2 * grid.count());
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const auto c = grid.coord(i);
    q[2 * i] = float(c[0]) + 0.7f;
    q[2 * i + 1] = float(c[1]) - 0.4f;
  }
  const auto idx = gather_grid_indices<float>(q, grid, k);
  auto off = random_tensor({idx.size(), 2}, 6);
  FourierConfig fc;
  for (auto _ : state) {
    auto out = local_cross_attention(feats, feats, idx, off, params, proj, fc, "bench");
    benchmark::DoNotOptimize(out.out.values().data());
  }
}
BENCHMARK(LocalAttention)->Args({32, 14, 3})->Args({64, 7, 5})->Unit(benchmark::kMicrosecond);

// One training pair: forward, multi-resolution loss and backward.
static void TrainPairMnist(benchmark::State& state) {
  const auto cfg = mnist_config();
  const auto mc = model_config(cfg, 28, 28);
  auto params = init_model<float>(mc, 1);
  perturb_heads(params);
  ad::Rng rng(7);
  PairSample p{synth_shapes(28, 28, rng), synth_shapes(28, 28, rng), std::nullopt, 0};
  const LossWeights w{cfg.lambda, cfg.alpha};
  for (auto _ : state) benchmark::DoNotOptimize(accumulate_pair(params, mc, w, p, 1.0f));
}
BENCHMARK(TrainPairMnist)->Unit(benchmark::kMillisecond);

static void TrainPairSynth64(benchmark::State& state) {
  const auto cfg = synth_config();
  const auto mc = model_config(cfg, 64, 64);
  auto params = init_model<float>(mc, 1);
  perturb_heads(params);
  const auto p = synthetic_pair(cfg, 9);
  const LossWeights w{cfg.lambda, cfg.alpha};
  for (auto _ : state) benchmark::DoNotOptimize(accumulate_pair(params, mc, w, p, 1.0f));
}
BENCHMARK(TrainPairSynth64)->Unit(benchmark::kMillisecond);

static void RegisterMnist(benchmark::State& state) {
  const auto cfg = mnist_config();
  auto bundle = build_model(model_config(cfg, 28, 28), 1);
  perturb_heads(bundle.params);
  ad::Rng rng(8);
  const auto a = synth_shapes(28, 28, rng), b = synth_shapes(28, 28, rng);
  for (auto _ : state) benchmark::DoNotOptimize(register_pair(bundle, a, b).field.data.data());
}
BENCHMARK(RegisterMnist)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
