#include <doctest.h>

#include <cmath>
#include <random>

#include "gapfuse/alignment.hpp"
#include "gapfuse/error.hpp"
#include "gapfuse/geometry.hpp"
#include "oracles.hpp"

using namespace gapfuse;

namespace {

PairedDataset planted(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> z(0.0, 0.3);
  Matrix image(n, d), text(n, d);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      image(r, c) = static_cast<float>(z(eng) + (c == 0 ? 2.0 : 0.0));
      text(r, c) = static_cast<float>(z(eng) + (c == 1 ? 2.0 : 0.0));
    }
    y[r] = static_cast<int>(r % 2);
  }
  return make_paired({Modality::image, image, "i"}, {Modality::text, text, "t"}, y, 2, seed);
}

std::vector<double> column_means(const Matrix& m, std::span<const std::size_t> rows) {
  std::vector<double> mean(m.cols(), 0.0);
  for (auto r : rows) {
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += m(r, c);
  }
  for (double& v : mean) v /= static_cast<double>(rows.size());
  return mean;
}

}  // namespace

TEST_SUITE("alignment") {

TEST_CASE("injected noise has the requested moments") {
  const Matrix zero(400, 50, 0.0F);
  const auto noisy = inject_noise(zero, 0.2, 3);
  double sum = 0.0, sq = 0.0;
  for (float v : noisy.data()) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(noisy.size());
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::sqrt(sq / n) == doctest::Approx(0.2).epsilon(0.02));
  CHECK(inject_noise(zero, 0.2, 3) == noisy);
  CHECK(inject_noise(zero, 0.0, 3) == zero);
  CHECK_THROWS_AS(inject_noise(zero, -1.0, 3), ConfigError);
}

TEST_CASE("lambda = 1 without renormalization closes the train gap") {
  const auto ds = planted(200, 6, 1);
  const auto aligned = shift_align(ds, 1.0, false);
  const auto train = ds.indices(Split::train);
  const auto mi = column_means(aligned.image.values, train);
  const auto mt = column_means(aligned.text.values, train);
  for (std::size_t c = 0; c < mi.size(); ++c) CHECK(std::abs(mi[c] - mt[c]) < 1e-6);
}

TEST_CASE("shifting by lambda then -lambda is the identity") {
  const auto ds = planted(100, 5, 2);
  PairedDataset unit = ds;
  unit.image = normalize_rows(ds.image);
  unit.text = normalize_rows(ds.text);
  const auto g = estimate_gap_vector(unit);
  for (double lambda : {0.3, 1.0, -0.7}) {
    const auto there = shift_embeddings(unit, lambda, g, false);
    const auto back = shift_embeddings(there, -lambda, g, false);
    for (std::size_t i = 0; i < unit.image.values.size(); ++i) {
      CHECK(std::abs(back.image.values.data()[i] - unit.image.values.data()[i]) < 1e-6);
      CHECK(std::abs(back.text.values.data()[i] - unit.text.values.data()[i]) < 1e-6);
    }
  }
}

TEST_CASE("shift direction: text moves against the gap, image along it") {
  const auto ds = planted(100, 4, 3);
  PairedDataset unit = ds;
  unit.image = normalize_rows(ds.image);
  unit.text = normalize_rows(ds.text);
  const auto g = estimate_gap_vector(unit);
  const auto s = shift_embeddings(unit, 0.5, g, false);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(s.text.values(0, c) == doctest::Approx(unit.text.values(0, c) - 0.25 * g[c]).epsilon(1e-6));
    CHECK(s.image.values(0, c) == doctest::Approx(unit.image.values(0, c) + 0.25 * g[c]).epsilon(1e-6));
  }
  // Negative lambda widens the gap.
  const double widened = measure_gap(shift_embeddings(unit, -0.5, g, false), false).gap_vector_norm();
  CHECK(widened > measure_gap(unit, false).gap_vector_norm());
}

TEST_CASE("renormalization puts rows back on the unit sphere") {
  const auto aligned = shift_align(planted(50, 4, 4), 0.8, true);
  for (std::size_t r = 0; r < aligned.rows(); ++r) {
    double ni = 0.0, nt = 0.0;
    for (float v : aligned.image.values.row(r)) ni += static_cast<double>(v) * v;
    for (float v : aligned.text.values.row(r)) nt += static_cast<double>(v) * v;
    CHECK(std::sqrt(ni) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::sqrt(nt) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("gap is estimated from the train split only") {
  const auto ds = planted(120, 5, 5);
  auto tampered = ds;
  for (auto r : ds.indices(Split::test)) {
    for (float& v : tampered.text.values.row(r)) v = -50.0F;
    for (float& v : tampered.image.values.row(r)) v = 7.0F;
  }
  CHECK(estimate_gap_vector(tampered) == estimate_gap_vector(ds));
  const auto a = shift_align(ds, 1.0, true);
  const auto b = shift_align(tampered, 1.0, true);
  for (auto r : ds.indices(Split::train)) CHECK(a.text.values.row(r)[0] == b.text.values.row(r)[0]);
}

TEST_CASE("pipeline phases") {
  const auto ds = planted(80, 4, 6);
  AlignmentConfig cfg;
  cfg.noise_std = 0.05;
  cfg.lambda_shift = 0.5;
  SUBCASE("noise only in the train phase by default") {
    const auto eval1 = apply_pipeline(ds, cfg, Phase::eval, 1);
    const auto eval2 = apply_pipeline(ds, cfg, Phase::eval, 2);
    CHECK(eval1.image.values == eval2.image.values);
    const auto train1 = apply_pipeline(ds, cfg, Phase::train, 1);
    const auto train2 = apply_pipeline(ds, cfg, Phase::train, 2);
    CHECK_FALSE(train1.image.values == train2.image.values);
    cfg.noise_at_eval = true;
    CHECK_FALSE(apply_pipeline(ds, cfg, Phase::eval, 1).image.values ==
                apply_pipeline(ds, cfg, Phase::eval, 2).image.values);
  }
  SUBCASE("noise-free pipeline equals shift_align") {
    cfg.noise_std = 0.0;
    const auto p = apply_pipeline(ds, cfg, Phase::train, 1);
    const auto s = shift_align(ds, 0.5, true);
    CHECK(p.image.values == s.image.values);
    CHECK(p.text.values == s.text.values);
  }
  SUBCASE("no shift, no renormalization, no noise leaves the data alone") {
    cfg.noise_std = 0.0;
    cfg.lambda_shift = 0.0;
    cfg.renormalize = false;
    CHECK(apply_pipeline(ds, cfg, Phase::train, 1).image.values == ds.image.values);
  }
  SUBCASE("labels and split are untouched") {
    const auto p = apply_pipeline(ds, cfg, Phase::train, 1);
    CHECK(p.labels == ds.labels);
    CHECK(p.split == ds.split);
  }
}

TEST_CASE("unequal widths: no shift, but the plain pipeline still runs") {
  std::mt19937_64 eng(8);
  std::normal_distribution<float> z(0.0F, 1.0F);
  Matrix image(40, 6), text(40, 9);
  for (float& v : image.data()) v = z(eng);
  for (float& v : text.data()) v = z(eng);
  std::vector<int> y(40);
  for (std::size_t r = 0; r < 40; ++r) y[r] = static_cast<int>(r % 2);
  const auto ds = make_paired({Modality::image, image, "i"}, {Modality::text, text, "t"}, y, 2, 1);
  AlignmentConfig cfg;
  CHECK(apply_pipeline(ds, cfg, Phase::train, 1).text.dim() == 9);
  cfg.lambda_shift = 0.5;
  CHECK_THROWS_AS(apply_pipeline(ds, cfg, Phase::eval, 1), ConfigError);
}

TEST_CASE("configuration checks") {
  AlignmentConfig cfg;
  cfg.noise_std = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.reg_weight = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lambda_shift = 1.5;
  CHECK(cfg.warnings().size() == 1);
  const auto ds = planted(10, 3, 1);
  const std::vector<double> wrong(4, 0.0);
  CHECK_THROWS_AS(shift_embeddings(ds, 1.0, wrong, false), ConfigError);
}

TEST_CASE("reg_loss value") {
  const Matrix t{{1, 2}, {0, 0}};
  const Matrix i{{0, 0}, {3, 4}};
  // (1/2N) * (5 + 25) with N = 2.
  CHECK(reg_loss(t, i).loss == doctest::Approx(7.5));
  CHECK_THROWS_AS(reg_loss(t, Matrix(2, 3)), ConfigError);
}

}
