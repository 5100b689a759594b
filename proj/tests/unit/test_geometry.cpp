#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "gapfuse/error.hpp"
#include "gapfuse/geometry.hpp"
#include "oracles.hpp"

using namespace gapfuse;

namespace {
Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed, double mean = 0.0) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> n(mean, 1.0);
  Matrix m(rows, cols);
  for (float& v : m.data()) v = static_cast<float>(n(eng));
  return m;
}
}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("normalize_rows gives unit rows and rejects zero rows") {
  const auto m = normalize_rows(Matrix{{3, 4}, {0, -2}});
  CHECK(m(0, 0) == doctest::Approx(0.6));
  CHECK(m(0, 1) == doctest::Approx(0.8));
  CHECK(m(1, 1) == doctest::Approx(-1.0));
  try {
    normalize_rows(Matrix{{1, 1}, {0, 0}});
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("cosine") {
  const std::vector<double> a{1, 0}, b{0, 2}, c{-3, 0};
  CHECK(cosine(std::span<const double>(a), std::span<const double>(b)) == doctest::Approx(0.0));
  CHECK(cosine(std::span<const double>(a), std::span<const double>(c)) == doctest::Approx(-1.0));
  const std::vector<double> z{0, 0};
  CHECK_THROWS_AS(cosine(std::span<const double>(a), std::span<const double>(z)), InputError);
}

TEST_CASE("measure_gap against a direct computation") {
  const auto image = gaussian(30, 6, 1, 0.5);
  const auto text = gaussian(30, 6, 2, -0.5);
  const auto rep = measure_gap(image, text);
  const auto ni = normalize_rows(image);
  const auto nt = normalize_rows(text);
  double scalar = 0.0, cos_sum = 0.0;
  std::vector<double> g(6, 0.0);
  for (std::size_t r = 0; r < 30; ++r) {
    double d2 = 0.0, dot = 0.0;
    for (std::size_t c = 0; c < 6; ++c) {
      g[c] += (nt(r, c) - ni(r, c)) / 30.0;
      d2 += (nt(r, c) - ni(r, c)) * (nt(r, c) - ni(r, c));
      dot += nt(r, c) * ni(r, c);
    }
    scalar += std::sqrt(d2) / 30.0;
    cos_sum += dot / 30.0;
  }
  for (std::size_t c = 0; c < 6; ++c) CHECK(rep.gap_vector[c] == doctest::Approx(g[c]).epsilon(1e-6));
  CHECK(rep.gap_scalar == doctest::Approx(scalar).epsilon(1e-6));
  CHECK(rep.mean_cross_modal_cosine == doctest::Approx(cos_sum).epsilon(1e-5));
  CHECK(rep.gap_vector_norm() == doctest::Approx(std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0))));
  CHECK_THROWS_AS(measure_gap(image, gaussian(30, 5, 3)), ConfigError);
}

TEST_CASE("identical modalities have no gap") {
  const auto x = gaussian(20, 4, 5);
  const auto rep = measure_gap(x, x);
  CHECK(rep.gap_scalar == doctest::Approx(0.0));
  CHECK(rep.gap_vector_norm() == doctest::Approx(0.0));
  CHECK(rep.mean_cross_modal_cosine == doctest::Approx(1.0));
}

TEST_CASE("variance decomposition adds up to the total") {
  const auto x = gaussian(40, 8, 7);
  for (bool relu : {false, true}) {
    RandomLayerFamily fam{12, 2, relu, false};
    const auto v = variance_decomposition(fam, x, 25, 3);
    CHECK(v.total == doctest::Approx(v.data_component + v.weight_component).epsilon(1e-9));
    CHECK(v.data_component > 0.0);
    CHECK(v.weight_component > 0.0);
  }
}

TEST_CASE("fixed weights leave no weight component") {
  const auto x = gaussian(40, 8, 7);
  const auto v = variance_decomposition({12, 1, true, false}, x, 10, 3, false);
  CHECK(v.weight_component == doctest::Approx(0.0));
  CHECK(v.total == doctest::Approx(v.data_component));
  CHECK_THROWS_AS(variance_decomposition({12, 1, true, false}, x, 1, 3), ConfigError);
}

TEST_CASE("random stack outputs follow the fan-in init") {
  const MatrixD x = gaussian(5, 10, 1).cast<double>();
  const auto outs = random_stack_outputs({16, 3, true, false}, x, 4);
  REQUIRE(outs.size() == 4);
  CHECK(outs[0] == x);
  for (std::size_t l = 1; l < outs.size(); ++l) {
    CHECK(outs[l].cols() == 16);
    for (double v : outs[l].data()) CHECK(v >= 0.0);
  }
  CHECK(random_stack_outputs({16, 3, true, false}, x, 4).back() == outs.back());
}

TEST_CASE("random ReLU layers narrow the cone") {
  const auto u = gaussian(64, 32, 11);
  const auto v = gaussian(64, 32, 12);
  const auto levels = cone_probe(4, 64, u, v, 20, 5);
  REQUIRE(levels.size() == 5);
  CHECK(std::abs(levels[0].mean_cosine) < 0.1);
  for (std::size_t l = 1; l < levels.size(); ++l) {
    CAPTURE(l);
    CHECK(levels[l].mean_cosine > levels[l - 1].mean_cosine);
    CHECK(levels[l].ci_low <= levels[l].mean_cosine);
    CHECK(levels[l].mean_cosine <= levels[l].ci_high);
    CHECK(levels[l].per_init.size() == 20);
  }
  CHECK(levels[4].mean_cosine > 0.5);
}

TEST_CASE("PCA matches a Jacobi eigen-decomposition") {
  const auto a = gaussian(50, 5, 21, 0.3);
  auto b = gaussian(30, 5, 22, -0.2);
  for (std::size_t r = 0; r < b.rows(); ++r) b(r, 2) *= 3.0F;
  const std::vector<Matrix> inputs{a, b};
  const auto pca = pca_project(inputs, 3);

  // Oracle: sample covariance of the stacked rows.
  std::vector<std::vector<double>> rows;
  for (const auto& m : inputs) {
    for (std::size_t r = 0; r < m.rows(); ++r) rows.emplace_back(m.row(r).begin(), m.row(r).end());
  }
  const std::size_t n = rows.size(), d = 5;
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += r[c] / static_cast<double>(n);
  }
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / static_cast<double>(n - 1);
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov[i][i];
  const auto [values, vectors] = oracle::jacobi_eigen(cov);

  for (std::size_t k = 0; k < 3; ++k) {
    CAPTURE(k);
    CHECK(pca.explained_variance_ratio[k] == doctest::Approx(values[k] / trace).epsilon(1e-8));
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += pca.components(k, c) * vectors[k][c];
    CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-8));
    // Sign convention: largest loading positive.
    double best = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      if (std::abs(pca.components(k, c)) > std::abs(best)) best = pca.components(k, c);
    }
    CHECK(best > 0.0);
  }
  // Projection of row 0 of the second matrix.
  for (std::size_t k = 0; k < 3; ++k) {
    double p = 0.0;
    for (std::size_t c = 0; c < d; ++c) p += (b(0, c) - mean[c]) * pca.components(k, c);
    CHECK(pca.projections[1](0, k) == doctest::Approx(p).epsilon(1e-5));
  }
}

TEST_CASE("PCA argument checks and CSV output") {
  const std::vector<Matrix> one{gaussian(4, 3, 1)};
  CHECK_THROWS_AS(pca_project(one, 0), ConfigError);
  CHECK_THROWS_AS(pca_project(one, 4), ConfigError);
  const std::vector<Matrix> mixed{gaussian(4, 3, 1), gaussian(4, 2, 2)};
  CHECK_THROWS_AS(pca_project(mixed, 1), ConfigError);

  const auto dir = oracle::scratch_dir("pca");
  const auto pca = pca_project(one, 2);
  const std::vector<std::string> names{"image"};
  write_pca_csv(dir / "p.csv", pca, names);
  std::ifstream in(dir / "p.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "group,row,pc1,pc2");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) lines += !line.empty();
  CHECK(lines == 4);
  const std::vector<std::string> too_many{"a", "b"};
  CHECK_THROWS_AS(write_pca_csv(dir / "q.csv", pca, too_many), ConfigError);
}

}
