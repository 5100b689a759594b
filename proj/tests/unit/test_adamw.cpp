#include <doctest.h>

#include <cmath>
#include <vector>

#include "gapfuse/adamw.hpp"
#include "gapfuse/error.hpp"
#include "oracles.hpp"

using namespace gapfuse;

TEST_SUITE("adamw") {

TEST_CASE("defaults") {
  const AdamW::Options o;
  CHECK(o.lr == 1e-3);
  CHECK(o.beta1 == 0.9);
  CHECK(o.beta2 == 0.999);
  CHECK(o.epsilon == 1e-8);
  CHECK(o.weight_decay == 1e-2);
}

TEST_CASE("matches a reference update over several steps") {
  AdamW::Options o;
  o.lr = 0.01;
  o.weight_decay = 0.1;
  const std::size_t n = 6;
  AdamW opt(n, o);
  auto p0 = oracle::random_matrix<float>(1, n, 3);
  std::vector<float> p(p0.data().begin(), p0.data().end());
  std::vector<double> ref(p.begin(), p.end()), m(n, 0.0), v(n, 0.0);
  for (int t = 1; t <= 5; ++t) {
    const auto gm = oracle::random_matrix<float>(1, n, 100 + static_cast<std::uint64_t>(t));
    std::vector<float> g(gm.data().begin(), gm.data().end());
    opt.step(p, g);
    for (std::size_t i = 0; i < n; ++i) {
      ref[i] *= 1.0 - o.lr * o.weight_decay;
      m[i] = o.beta1 * m[i] + (1 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1 - o.beta2) * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(o.beta1, t));
      const double vhat = v[i] / (1 - std::pow(o.beta2, t));
      ref[i] -= o.lr * mhat / (std::sqrt(vhat) + o.epsilon);
    }
    for (std::size_t i = 0; i < n; ++i) CHECK(p[i] == doctest::Approx(ref[i]).epsilon(1e-6));
  }
  CHECK(opt.step_count() == 5);
}

TEST_CASE("weight decay is decoupled from the gradient") {
  AdamW::Options o;
  o.lr = 0.1;
  o.weight_decay = 0.5;
  AdamW opt(2, o);
  std::vector<float> p{2.0F, -4.0F};
  const std::vector<float> zero{0.0F, 0.0F};
  opt.step(p, zero);
  CHECK(p[0] == doctest::Approx(2.0 * (1 - 0.05)));
  CHECK(p[1] == doctest::Approx(-4.0 * (1 - 0.05)));
}

TEST_CASE("first step moves each parameter by about lr") {
  AdamW::Options o;
  o.weight_decay = 0.0;
  AdamW opt(3, o);
  std::vector<float> p{0.0F, 0.0F, 0.0F};
  const std::vector<float> g{5.0F, -0.01F, 100.0F};
  opt.step(p, g);
  CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(1e-3).epsilon(1e-4));
  CHECK(p[2] == doctest::Approx(-1e-3).epsilon(1e-4));
}

TEST_CASE("reset clears moments and step count") {
  AdamW opt(1, {});
  std::vector<float> p{1.0F};
  const std::vector<float> g{1.0F};
  opt.step(p, g);
  opt.reset();
  CHECK(opt.step_count() == 0);
  CHECK(opt.first_moment()[0] == 0.0);
}

TEST_CASE("errors") {
  AdamW::Options bad;
  bad.lr = -1.0;
  CHECK_THROWS_AS(AdamW(1, bad), ConfigError);
  AdamW opt(2, {});
  std::vector<float> p{1.0F};
  const std::vector<float> g{1.0F};
  CHECK_THROWS_AS(opt.step(p, g), ConfigError);
}

}
