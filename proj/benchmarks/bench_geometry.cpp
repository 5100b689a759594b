#include <benchmark/benchmark.h>

#include <random>

#include "gapfuse/alignment.hpp"
#include "gapfuse/geometry.hpp"
#include "gapfuse/synthetic.hpp"

using namespace gapfuse;

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<float> n(0.0F, 1.0F);
  Matrix m(rows, cols);
  for (float& v : m.data()) v = n(eng);
  return m;
}

void BM_MeasureGap(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix image = gaussian(n, 512, 1);
  const Matrix text = gaussian(n, 512, 2);
  for (auto _ : state) {
    auto g = measure_gap(image, text);
    benchmark::DoNotOptimize(g.gap_scalar);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MeasureGap)->Arg(1000)->Arg(8000);

void BM_ShiftAlign(benchmark::State& state) {
  const auto data = generate(SynthSpec::medical(2)).dataset;
  for (auto _ : state) {
    auto shifted = shift_align(data, 0.5, true);
    benchmark::DoNotOptimize(shifted.text.values.data().data());
  }
}
BENCHMARK(BM_ShiftAlign);

void BM_Pca(benchmark::State& state) {
  const std::vector<Matrix> inputs{gaussian(1000, static_cast<std::size_t>(state.range(0)), 3),
                                   gaussian(1000, static_cast<std::size_t>(state.range(0)), 4)};
  for (auto _ : state) {
    auto p = pca_project(inputs, 2);
    benchmark::DoNotOptimize(p.explained_variance_ratio.data());
  }
}
BENCHMARK(BM_Pca)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_ConeProbe(benchmark::State& state) {
  const Matrix u = gaussian(32, 64, 5);
  const Matrix v = gaussian(32, 64, 6);
  for (auto _ : state) {
    auto levels = cone_probe(static_cast<std::size_t>(state.range(0)), 64, u, v, 50, 9);
    benchmark::DoNotOptimize(levels.back().mean_cosine);
  }
}
BENCHMARK(BM_ConeProbe)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace
