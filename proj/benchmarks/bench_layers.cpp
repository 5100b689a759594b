#include <benchmark/benchmark.h>

#include <random>

#include "gapfuse/fusion_model.hpp"
#include "gapfuse/ops.hpp"

using namespace gapfuse;

namespace {

Matrix uniform(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<float> u(-1.0F, 1.0F);
  Matrix m(rows, cols);
  for (float& v : m.data()) v = u(eng);
  return m;
}

void BM_DenseForward(benchmark::State& state) {
  const auto in_dim = static_cast<std::size_t>(state.range(0));
  const Matrix x = uniform(64, in_dim, 1);
  const Matrix w = uniform(128, in_dim, 2);
  const std::vector<float> b(128, 0.1F);
  for (auto _ : state) {
    auto y = ops::dense_forward(x, w, std::span<const float>(b));
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_DenseForward)->Arg(1024)->Arg(4864);

// One forward and backward pass over a batch of 64, CLIP and DINO widths.
void BM_FusionStep(benchmark::State& state) {
  FusionConfig cfg;
  cfg.kind = state.range(0) == 0 ? FusionKind::early : FusionKind::late_joint;
  cfg.image_dim = static_cast<std::size_t>(state.range(1));
  cfg.text_dim = cfg.image_dim == 512 ? 512 : 4096;
  cfg.dropout = 0.2;
  auto model = FusionModel::build(cfg, 7);
  const Matrix image = uniform(64, cfg.image_dim, 3);
  const Matrix text = uniform(64, cfg.text_dim, 4);
  Matrix grad(64, 1, 0.01F);
  for (auto _ : state) {
    model.zero_grad();
    auto out = model.forward(image, text, Phase::train);
    model.backward(grad);
    benchmark::DoNotOptimize(out.logits.data().data());
  }
  state.SetLabel(std::string(to_string(cfg.kind)));
}
BENCHMARK(BM_FusionStep)->Args({0, 512})->Args({0, 768})->Args({1, 512})->Args({1, 768});

void BM_FusionInference(benchmark::State& state) {
  FusionConfig cfg;
  cfg.kind = FusionKind::early;
  cfg.image_dim = 768;
  cfg.text_dim = 4096;
  auto model = FusionModel::build(cfg, 7);
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Matrix image = uniform(rows, cfg.image_dim, 3);
  const Matrix text = uniform(rows, cfg.text_dim, 4);
  for (auto _ : state) {
    auto out = model.forward(image, text, Phase::eval);
    benchmark::DoNotOptimize(out.logits.data().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FusionInference)->Arg(64)->Arg(512);

}  // namespace
