#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "gapfuse/embedding_store.hpp"
#include "gapfuse/error.hpp"
#include "oracles.hpp"

using namespace gapfuse;

namespace {
EmbeddingMatrix embed(Modality m, Matrix values) { return {m, std::move(values), "test"}; }

std::vector<int> alternating(std::size_t n, int classes) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  return y;
}
}  // namespace

TEST_SUITE("store") {

TEST_CASE("CSV round trip is bit exact at 1000 x 512") {
  const auto dir = oracle::scratch_dir("csv");
  auto values = oracle::random_matrix<float>(1000, 512, 5, -3.0, 3.0);
  values(0, 0) = std::numeric_limits<float>::denorm_min();
  values(0, 1) = -0.0F;
  values(1, 0) = 1e-30F;
  const auto m = embed(Modality::image, values);
  save_csv(dir / "a.csv", m);
  const auto back = load_csv(dir / "a.csv", Modality::image, 512);
  REQUIRE(back.rows() == 1000);
  REQUIRE(back.dim() == 512);
  CHECK(std::memcmp(back.values.data().data(), values.data().data(), values.size() * sizeof(float)) == 0);

  save_csv(dir / "h.csv", m, true);
  CHECK(load_csv(dir / "h.csv", Modality::image).rows() == 1000);
}

TEST_CASE("header row is detected and skipped") {
  const auto dir = oracle::scratch_dir("header");
  std::ofstream(dir / "e.csv") << "d0,d1\n1,2\n3,4\n";
  const auto m = load_csv(dir / "e.csv", Modality::text);
  CHECK(m.rows() == 2);
  CHECK(m.values(1, 1) == 4.0F);
}

TEST_CASE("malformed embedding files name the location") {
  const auto dir = oracle::scratch_dir("bad_csv");
  SUBCASE("ragged") {
    std::ofstream(dir / "r.csv") << "1,2,3\n4,5\n";
    try {
      load_csv(dir / "r.csv", Modality::image);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }
  SUBCASE("non-finite") {
    std::ofstream(dir / "n.csv") << "1,2\nnan,4\n";
    CHECK_THROWS_AS(load_csv(dir / "n.csv", Modality::image), ParseError);
    std::ofstream(dir / "i.csv") << "1,inf\n";
    CHECK_THROWS_AS(load_csv(dir / "i.csv", Modality::image), ParseError);
  }
  SUBCASE("garbage cell") {
    std::ofstream(dir / "g.csv") << "1,2\n3,x\n";
    CHECK_THROWS_AS(load_csv(dir / "g.csv", Modality::image), ParseError);
  }
  SUBCASE("dimension mismatch") {
    std::ofstream(dir / "d.csv") << "1,2\n3,4\n";
    CHECK_THROWS_AS(load_csv(dir / "d.csv", Modality::image, 3), ConfigError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_csv(dir / "nope.csv", Modality::image), ParseError);
  }
}

TEST_CASE("labels round trip") {
  const auto dir = oracle::scratch_dir("labels");
  const std::vector<int> y{0, 3, 1, 2, 2};
  save_labels(dir / "y.csv", y);
  CHECK(load_labels(dir / "y.csv") == y);
  std::ofstream(dir / "bad.csv") << "0\n1.5\n";
  CHECK_THROWS_AS(load_labels(dir / "bad.csv"), ParseError);
}

TEST_CASE("split sizes follow floor(N * fraction)") {
  for (std::size_t n : {std::size_t{10}, std::size_t{11}, std::size_t{99}, std::size_t{1000}}) {
    for (double f : {0.5, 0.7, 0.8}) {
      CAPTURE(n);
      CAPTURE(f);
      const auto ds = make_paired(embed(Modality::image, Matrix(n, 3, 1.0F)), embed(Modality::text, Matrix(n, 3, 1.0F)),
                                  alternating(n, 2), 2, 1, {f, false});
      const auto train = ds.indices(Split::train);
      const auto test = ds.indices(Split::test);
      CHECK(train.size() == static_cast<std::size_t>(std::floor(static_cast<double>(n) * f + 1e-9)));
      CHECK(train.size() + test.size() == n);
      std::set<std::size_t> all(train.begin(), train.end());
      all.insert(test.begin(), test.end());
      CHECK(all.size() == n);
    }
  }
}

TEST_CASE("split is reproducible under its seed") {
  auto mk = [](std::uint64_t seed) {
    return make_paired(embed(Modality::image, Matrix(50, 2, 1.0F)), embed(Modality::text, Matrix(50, 2, 1.0F)),
                       alternating(50, 2), 2, seed)
        .split;
  };
  CHECK(mk(3) == mk(3));
  CHECK(mk(3) != mk(4));
}

TEST_CASE("stratified split keeps class proportions") {
  std::vector<int> y(200, 0);
  for (std::size_t i = 0; i < 40; ++i) y[i] = 1;
  for (std::size_t i = 40; i < 50; ++i) y[i] = 2;
  const auto ds = make_paired(embed(Modality::image, Matrix(200, 2, 1.0F)), embed(Modality::text, Matrix(200, 2, 1.0F)),
                              y, 3, 9, {0.8, true});
  std::vector<std::size_t> counts(3, 0);
  for (auto i : ds.indices(Split::train)) ++counts[static_cast<std::size_t>(ds.labels[i])];
  CHECK(counts[0] == 120);
  CHECK(counts[1] == 32);
  CHECK(counts[2] == 8);
}

TEST_CASE("class weights are inverse frequency with mean one") {
  const std::vector<int> y{0, 0, 0, 1, 2, 2};
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
  const auto w = inverse_frequency_weights(y, rows, 3);
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) / 3.0 == doctest::Approx(1.0));
  CHECK(w[1] / w[0] == doctest::Approx(3.0));
  CHECK(w[2] / w[0] == doctest::Approx(1.5));
  const std::vector<std::size_t> only_zero{0, 1, 2};
  CHECK_THROWS_AS(inverse_frequency_weights(y, only_zero, 3), InputError);
}

TEST_CASE("dataset construction errors") {
  const auto img = embed(Modality::image, Matrix(4, 2, 1.0F));
  const auto txt = embed(Modality::text, Matrix(4, 2, 1.0F));
  CHECK_THROWS_AS(make_paired(img, embed(Modality::text, Matrix(3, 2, 1.0F)), {0, 1, 0, 1}, 2, 1), ConfigError);
  CHECK_THROWS_AS(make_paired(img, txt, {0, 1, 0, 5}, 2, 1), InputError);
  CHECK_THROWS_AS(make_paired(img, txt, {0, 1, 0, 1}, 2, 1, {1.0, false}), ConfigError);
  // Every row in one class: the absent class has no weight.
  CHECK_THROWS_AS(make_paired(img, txt, {1, 1, 1, 1}, 2, 1), InputError);
}

TEST_CASE("modality statistics use unit-normalized rows") {
  const Matrix m{{3, 0}, {0, 5}};
  const auto s = modality_stats(m);
  CHECK(s.mean_norm == doctest::Approx(4.0));
  // Unit rows (1,0) and (0,1): per-dimension population variance 0.25.
  CHECK(s.per_dim_variance[0] == doctest::Approx(0.25));
  CHECK(s.mean_variance == doctest::Approx(0.25));
}

TEST_CASE("manifest resolves relative paths and round trips") {
  const auto dir = oracle::scratch_dir("manifest");
  const auto img = embed(Modality::image, oracle::random_matrix<float>(20, 4, 1));
  const auto txt = embed(Modality::text, oracle::random_matrix<float>(20, 4, 2));
  std::filesystem::create_directories(dir / "data");
  save_csv(dir / "data" / "i.csv", img);
  save_csv(dir / "data" / "t.csv", txt);
  save_labels(dir / "data" / "y.csv", alternating(20, 2));
  std::ofstream(dir / "data" / "m.txt") << "image_csv = i.csv\ntext_csv = t.csv\nlabels_csv = y.csv\nseed = "
                                        << std::numeric_limits<std::uint64_t>::max() << "\n";
  const auto m = load_manifest(dir / "data" / "m.txt");
  CHECK(m.image_csv == dir / "data" / "i.csv");
  CHECK(m.seed == std::numeric_limits<std::uint64_t>::max());
  const auto ds = load_dataset(m);
  CHECK(ds.rows() == 20);
  CHECK(ds.n_classes == 2);
  CHECK(ds.image.values == img.values);

  save_manifest(dir / "copy.txt", m);
  const auto again = load_manifest(dir / "copy.txt");
  CHECK(again.text_csv == m.text_csv);
  CHECK(again.seed == m.seed);
}

TEST_CASE("manifest errors") {
  const auto dir = oracle::scratch_dir("manifest_bad");
  try {
    load_manifest(dir / "absent.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("absent.txt") != std::string::npos);
  }
  std::ofstream(dir / "partial.txt") << "image_csv = i.csv\n";
  CHECK_THROWS_AS(load_manifest(dir / "partial.txt"), ParseError);
  std::ofstream(dir / "extra.txt") << "image_csv = i\ntext_csv = t\nlabels_csv = y\ncolour = blue\n";
  CHECK_THROWS_AS(load_manifest(dir / "extra.txt"), ParseError);
}

}
