#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gapfuse/error.hpp"
#include "gapfuse/fusion_model.hpp"
#include "gapfuse/layers.hpp"
#include "oracles.hpp"

using namespace gapfuse;

namespace {
FusionConfig config(FusionKind kind, std::size_t image_dim, std::size_t text_dim, std::size_t classes) {
  FusionConfig c;
  c.kind = kind;
  c.image_dim = image_dim;
  c.text_dim = text_dim;
  c.n_classes = classes;
  return c;
}
}  // namespace

TEST_SUITE("model") {

TEST_CASE("parameter counts for six configurations") {
  struct Case {
    FusionConfig cfg;
    std::size_t expected;
  };
  // Hand-expanded: dense (in*h + h) + batchnorm (2h) per block, head (h_total*out + out).
  const Case cases[] = {
      {config(FusionKind::early, 512, 512, 2), 1024 * 128 + 128 + 256 + 128 + 1},
      {config(FusionKind::early, 768, 4096, 2), 4864 * 128 + 128 + 256 + 128 + 1},
      {config(FusionKind::late_joint, 512, 512, 2), 2 * (512 * 64 + 64 + 128) + 128 + 1},
      {config(FusionKind::late_joint, 768, 4096, 2), (768 * 64 + 192) + (4096 * 64 + 192) + 128 + 1},
      {config(FusionKind::early, 512, 512, 7), 1024 * 128 + 128 + 256 + 128 * 7 + 7},
      {config(FusionKind::late_joint, 768, 4096, 7), (768 * 64 + 192) + (4096 * 64 + 192) + 128 * 7 + 7},
  };
  CHECK(cases[0].expected == 131585);
  CHECK(cases[1].expected == 623105);
  CHECK(cases[2].expected == 66049);
  CHECK(cases[3].expected == 311809);
  for (const auto& c : cases) {
    CAPTURE(c.expected);
    const auto model = FusionModel::build(c.cfg, 1);
    CHECK(model.parameter_count() == c.expected);
    CHECK(expected_parameter_count(c.cfg) == c.expected);
  }
}

TEST_CASE("output width: one logit for binary, one per class otherwise") {
  auto binary = FusionModel::build(config(FusionKind::early, 4, 3, 2), 1);
  auto multi = FusionModel::build(config(FusionKind::late_joint, 4, 3, 5), 1);
  const auto image = oracle::random_matrix<float>(3, 4, 1);
  const auto text = oracle::random_matrix<float>(3, 3, 2);
  CHECK(binary.forward(image, text, Phase::eval).logits.cols() == 1);
  const auto out = multi.forward(image, text, Phase::eval);
  CHECK(out.logits.cols() == 5);
  CHECK(out.image_features.cols() == 64);
  CHECK(out.text_features.cols() == 64);
}

TEST_CASE("initialization stays within the fan-in bound") {
  const auto model = FusionModel::build(config(FusionKind::early, 30, 20, 2), 9);
  const auto& params = model.parameters();
  for (std::size_t s = 0; s < params.segments().size(); ++s) {
    const auto& seg = params.segments()[s];
    if (seg.name.find("weight") == std::string::npos) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(seg.cols));
    for (float v : params.values(s)) CHECK(std::abs(v) <= bound + 1e-7);
  }
  // gamma starts at one, running variance at one.
  const auto gamma = params.find("block.3.gamma");
  REQUIRE(gamma.has_value());
  for (float v : params.values(*gamma)) CHECK(v == 1.0F);
}

TEST_CASE("same seed builds identical models") {
  const auto a = FusionModel::build(config(FusionKind::late_joint, 8, 8, 3), 42);
  const auto b = FusionModel::build(config(FusionKind::late_joint, 8, 8, 3), 42);
  const auto c = FusionModel::build(config(FusionKind::late_joint, 8, 8, 3), 43);
  CHECK(std::equal(a.parameters().all_values().begin(), a.parameters().all_values().end(),
                   b.parameters().all_values().begin()));
  CHECK_FALSE(std::equal(a.parameters().all_values().begin(), a.parameters().all_values().end(),
                         c.parameters().all_values().begin()));
}

TEST_CASE("input dimension errors name the modality") {
  auto model = FusionModel::build(config(FusionKind::late_joint, 4, 3, 2), 1);
  const Matrix image(2, 5, 0.0F);
  const Matrix text(2, 3, 0.0F);
  try {
    model.forward(image, text, Phase::eval);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("image") != std::string::npos);
  }
  CHECK_THROWS_AS(model.forward(Matrix(2, 4), Matrix(3, 3), Phase::eval), ConfigError);
}

TEST_CASE("backward before forward is a usage error") {
  auto model = FusionModel::build(config(FusionKind::early, 4, 3, 2), 1);
  CHECK_THROWS_AS(model.backward(Matrix(2, 1)), UsageError);
}

TEST_CASE("training forward updates running statistics, eval does not") {
  auto model = FusionModel::build(config(FusionKind::early, 4, 3, 2), 1);
  const auto image = oracle::random_matrix<float>(6, 4, 3);
  const auto text = oracle::random_matrix<float>(6, 3, 4);
  const std::vector<float> before(model.buffers().all_values().begin(), model.buffers().all_values().end());
  model.forward(image, text, Phase::eval);
  CHECK(std::equal(before.begin(), before.end(), model.buffers().all_values().begin()));
  model.forward(image, text, Phase::train);
  CHECK_FALSE(std::equal(before.begin(), before.end(), model.buffers().all_values().begin()));
}

TEST_CASE("eval forward is deterministic even with dropout") {
  auto cfg = config(FusionKind::early, 4, 3, 2);
  cfg.dropout = 0.5;
  auto model = FusionModel::build(cfg, 1);
  const auto image = oracle::random_matrix<float>(5, 4, 3);
  const auto text = oracle::random_matrix<float>(5, 3, 4);
  CHECK(model.forward(image, text, Phase::eval).logits == model.forward(image, text, Phase::eval).logits);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = oracle::scratch_dir("ckpt");
  auto model = FusionModel::build(config(FusionKind::late_joint, 6, 5, 3), 17);
  const auto image = oracle::random_matrix<float>(8, 6, 5);
  const auto text = oracle::random_matrix<float>(8, 5, 6);
  model.forward(image, text, Phase::train);  // move the running statistics off their defaults
  model.save(dir / "m.json");
  auto loaded = FusionModel::load(dir / "m.json");
  CHECK(loaded.config().kind == FusionKind::late_joint);
  CHECK(loaded.parameter_count() == model.parameter_count());
  CHECK(loaded.forward(image, text, Phase::eval).logits == model.forward(image, text, Phase::eval).logits);

  std::ofstream(dir / "bad.json") << "{\"format\": \"something-else\"}";
  CHECK_THROWS_AS(FusionModel::load(dir / "bad.json"), ParseError);
  CHECK_THROWS_AS(FusionModel::load(dir / "missing.json"), ParseError);
}

TEST_CASE("fusion kind parsing and config validation") {
  CHECK(parse_fusion_kind("late") == FusionKind::late_joint);
  CHECK(parse_fusion_kind("late-joint") == FusionKind::late_joint);
  CHECK_THROWS_AS(parse_fusion_kind("middle"), ConfigError);
  CHECK_THROWS_AS(FusionModel::build(config(FusionKind::early, 0, 3, 2), 1), ConfigError);
  CHECK_THROWS_AS(FusionModel::build(config(FusionKind::early, 3, 3, 1), 1), ConfigError);
}

TEST_CASE("layer specs") {
  CHECK(LayerSpec::dense(10, 4).parameter_count() == 44);
  CHECK(LayerSpec::batchnorm(4).parameter_count() == 8);
  CHECK(LayerSpec::relu(4).parameter_count() == 0);
  CHECK_THROWS_AS(LayerSpec::dropout(4, 1.5).validate(), ConfigError);
  const auto block = feature_block(10, 4, 0.0, 1e-5, 0.1);
  REQUIRE(block.size() == 4);
  CHECK(block[0].kind == LayerKind::dense);
  CHECK(block[1].kind == LayerKind::relu);
  CHECK(block[2].kind == LayerKind::dropout);
  CHECK(block[3].kind == LayerKind::batchnorm);
}

}
