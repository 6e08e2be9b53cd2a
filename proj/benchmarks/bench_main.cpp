#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "catwm/adversary.hpp"
#include "catwm/attacks.hpp"
#include "catwm/dataset.hpp"
#include "catwm/training.hpp"

namespace {

using namespace catwm;

void BM_Primitive(benchmark::State& state) {
  const auto& p = registry()[static_cast<std::size_t>(state.range(0))];
  const auto x = synthetic_images(32, 32, 1);
  Rng rng(2);
  auto params = sample_params(p, rng);
  if (p.is_binary) params = AttackParams::of(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(apply(p, x, params));
  state.SetLabel(p.id);
  state.SetItemsProcessed(state.iterations() * x.size(0));
}
BENCHMARK(BM_Primitive)->DenseRange(0, 11)->Unit(benchmark::kMicrosecond);

void BM_Rollout(benchmark::State& state) {
  AdversaryConfig cfg;
  cfg.depth = static_cast<int>(state.range(0));
  AttackController ctrl(cfg, static_cast<std::int64_t>(registry().size()));
  const auto x = synthetic_images(32, 32, 3);
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(rollout(ctrl, x, registry(), rng).image);
}
BENCHMARK(BM_Rollout)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig tc;
  tc.warmup_steps = 0;
  tc.mode = static_cast<AdversaryMode>(state.range(0));
  AdversaryConfig ac;
  ac.depth = 2;
  Trainer trainer(tc, ac, WatermarkConfig{});
  const auto x = synthetic_images(tc.batch_size, 32, 5);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(x));
  state.SetLabel(std::string(mode_name(tc.mode)));
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
