#include <benchmark/benchmark.h>

#include "gapfuse/efficiency.hpp"
#include "gapfuse/pipeline.hpp"
#include "gapfuse/synthetic.hpp"

using namespace gapfuse;

namespace {

void BM_TrainEpoch(benchmark::State& state) {
  auto spec = SynthSpec::medical(3);
  spec.n_samples = static_cast<std::size_t>(state.range(0));
  const auto data = generate(spec).dataset;
  RunConfig cfg;
  cfg.epochs = 1;
  cfg.model_kind = state.range(1) == 0 ? FusionKind::early : FusionKind::late_joint;
  cfg.align.lambda_shift = 0.5;
  for (auto _ : state) {
    auto result = train_run(data, cfg);
    benchmark::DoNotOptimize(result.report.best_f1);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainEpoch)->Args({1000, 0})->Args({1000, 1})->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  auto spec = SynthSpec::general(5);
  spec.n_samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto r = generate(spec);
    benchmark::DoNotOptimize(r.achieved_gap);
  }
}
BENCHMARK(BM_Generate)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_EpochMemory(benchmark::State& state) {
  std::size_t total = 0;
  for (auto _ : state) {
    total += epoch_memory(13012, 64, 768, 4096, 2);
    benchmark::DoNotOptimize(total);
  }
}
BENCHMARK(BM_EpochMemory);

}  // namespace
