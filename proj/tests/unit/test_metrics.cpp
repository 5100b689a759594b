#include <doctest.h>

#include <random>
#include <vector>

#include "gapfuse/error.hpp"
#include "gapfuse/metrics.hpp"

using namespace gapfuse;

namespace {
// Precision/recall form, independent of the library's count formula.
double f1_oracle(const std::vector<int>& t, const std::vector<int>& p, int c) {
  double tp = 0, pred = 0, actual = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tp += t[i] == c && p[i] == c;
    pred += p[i] == c;
    actual += t[i] == c;
  }
  if (tp == 0) return 0.0;
  const double precision = tp / pred, recall = tp / actual;
  return 2 * precision * recall / (precision + recall);
}
}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("accuracy") {
  const std::vector<int> t{0, 1, 1, 0}, p{0, 1, 0, 0};
  CHECK(accuracy(t, p) == doctest::Approx(0.75));
  CHECK(accuracy(std::vector<int>{}, std::vector<int>{}) == 0.0);
  CHECK_THROWS_AS(accuracy(t, std::vector<int>{0}), ConfigError);
}

TEST_CASE("binary F1 hand example") {
  // tp 2, fp 1, fn 1: precision 2/3, recall 2/3.
  const std::vector<int> t{1, 1, 1, 0, 0}, p{1, 1, 0, 1, 0};
  CHECK(binary_f1(t, p) == doctest::Approx(2.0 / 3.0));
  CHECK(binary_f1(t, std::vector<int>{0, 0, 0, 0, 0}) == 0.0);
  CHECK(binary_f1(t, t) == 1.0);
}

TEST_CASE("F1 agrees with the precision/recall oracle on random labels") {
  std::mt19937_64 eng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 5;
    std::uniform_int_distribution<int> u(0, k - 1);
    std::vector<int> t(60), p(60);
    for (auto& v : t) v = u(eng);
    for (auto& v : p) v = u(eng);
    if (k == 2) {
      CHECK(task_f1(t, p, 2) == doctest::Approx(f1_oracle(t, p, 1)));
    } else {
      double sum = 0.0;
      int present = 0;
      for (int c = 0; c < k; ++c) {
        bool seen = false;
        for (std::size_t i = 0; i < t.size(); ++i) seen = seen || t[i] == c || p[i] == c;
        if (!seen) continue;
        sum += f1_oracle(t, p, c);
        ++present;
      }
      CHECK(task_f1(t, p, static_cast<std::size_t>(k)) == doctest::Approx(sum / present));
    }
  }
}

TEST_CASE("macro F1 skips classes absent from truth and predictions") {
  const std::vector<int> t{0, 0, 1}, p{0, 0, 1};
  CHECK(macro_f1(t, p, 5) == doctest::Approx(1.0));
  CHECK_THROWS_AS(macro_f1(t, std::vector<int>{0, 0, 7}, 5), InputError);
}

}
