#include "gapfuse/synthetic.hpp"

#include <algorithm>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "gapfuse/error.hpp"
#include "gapfuse/random.hpp"

namespace gapfuse {

std::string_view to_string(Regime r) { return r == Regime::medical ? "medical" : "general"; }

Regime parse_regime(std::string_view text) {
  if (text == "medical") return Regime::medical;
  if (text == "general") return Regime::general;
  throw ConfigError("unknown regime '" + std::string(text) + "' (expected medical or general)");
}

SynthSpec SynthSpec::medical(std::uint64_t seed) {
  SynthSpec s;
  s.seed = seed;
  return s;
}

SynthSpec SynthSpec::general(std::uint64_t seed) {
  SynthSpec s;
  s.regime = Regime::general;
  s.text_variance = 3e-3;
  s.image_variance = 1.7e-3;
  s.gap_magnitude = 0.6;
  s.seed = seed;
  return s;
}

void SynthSpec::validate() const {
  if (n_samples < 2 || dim == 0 || n_classes < 2) {
    throw ConfigError("synthetic spec needs n_samples >= 2, dim >= 1 and n_classes >= 2");
  }
  if (dim < n_classes + 2) {
    throw ConfigError("synthetic spec needs dim >= n_classes + 2 to place orthogonal class directions");
  }
  if (gap_magnitude < 0.0 || gap_magnitude > 2.0) {
    throw ConfigError("gap_magnitude " + std::to_string(gap_magnitude) +
                      " is infeasible: unit vectors are at most 2 apart");
  }
  if (text_variance < 0.0 || image_variance < 0.0) throw ConfigError("variances must be >= 0");
  if (!(shared_fraction >= 0.0 && shared_fraction <= 1.0)) {
    throw ConfigError("shared_fraction must be in [0, 1]");
  }
  if (!label_skew.empty() && label_skew.size() != n_classes) {
    throw ConfigError("label_skew needs one probability per class");
  }
}

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<Vec> orthonormal_directions(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<Vec> basis;
  while (basis.size() < count) {
    Vec v(dim);
    for (double& x : v) x = rng.normal();
    for (const auto& b : basis) {
      const double p = dot(v, b);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= p * b[i];
    }
    const double n = std::sqrt(dot(v, v));
    if (n < 1e-8) continue;
    for (double& x : v) x /= n;
    basis.push_back(std::move(v));
  }
  return basis;
}

/// normalize(center + scale * latent_n) for all n.
MatrixD place(const Vec& center, const MatrixD& latent, double scale) {
  MatrixD out(latent.rows(), latent.cols());
  for (std::size_t r = 0; r < latent.rows(); ++r) {
    auto l = latent.row(r);
    auto o = out.row(r);
    double n2 = 0.0;
    for (std::size_t c = 0; c < o.size(); ++c) {
      o[c] = center[c] + scale * l[c];
      n2 += o[c] * o[c];
    }
    const double n = std::sqrt(n2);
    for (double& v : o) v /= n;
  }
  return out;
}

double mean_variance(const MatrixD& m) {
  const std::size_t n = m.rows(), d = m.cols();
  Vec mean(d, 0.0), sq(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += m(r, c);
  }
  for (double& v : mean) v /= static_cast<double>(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double x = m(r, c) - mean[c];
      total += x * x;
    }
  }
  return total / static_cast<double>(n * d);
}

/// Rotates every row by `angle` in the plane spanned by orthonormal a, b.
MatrixD rotate(const MatrixD& m, const Vec& a, const Vec& b, double angle) {
  const double cs = std::cos(angle), sn = std::sin(angle);
  MatrixD out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = out.row(r);
    double pa = 0.0, pb = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      pa += row[c] * a[c];
      pb += row[c] * b[c];
    }
    const double na = cs * pa - sn * pb;
    const double nb = sn * pa + cs * pb;
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += (na - pa) * a[c] + (nb - pb) * b[c];
  }
  return out;
}

double mean_pair_distance(const MatrixD& a, const MatrixD& b) {
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      const double x = a(r, c) - b(r, c);
      d2 += x * x;
    }
    total += std::sqrt(d2);
  }
  return total / static_cast<double>(a.rows());
}

/// Smallest x in [lo, hi] with f(x) >= target for increasing f.
double bisect(const std::function<double(double)>& f, double target, double lo, double hi,
              bool log_scale) {
  for (int it = 0; it < 80; ++it) {
    const double mid = log_scale ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    if (f(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return log_scale ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
}

double solve_scale(const Vec& center, const MatrixD& latent, double target, std::string_view what) {
  if (target <= 0.0) return 0.0;
  auto var = [&](double s) { return mean_variance(place(center, latent, s)); };
  constexpr double kMaxScale = 1e4;
  const double reachable = var(kMaxScale);
  if (target > reachable) {
    throw ConfigError(std::string(what) + " variance " + std::to_string(target) +
                      " is infeasible for unit vectors in this dimension (max about " +
                      std::to_string(reachable) + ")");
  }
  return bisect(var, target, 1e-8, kMaxScale, true);
}

}  // namespace

SynthResult generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_samples, d = spec.dim;
  Rng rng(spec.seed);
  const auto dirs = orthonormal_directions(spec.n_classes + 2, d, rng);
  const Vec& center = dirs[0];
  const Vec& partner = dirs[1];

  std::vector<int> labels(n);
  const double unit = 1.0 / std::sqrt(static_cast<double>(d));
  const std::size_t k = spec.n_classes;
  // Per-class scores along the class directions, one set per modality.
  std::vector<double> image_scores(n * k, 1.0), text_scores(n * k, 1.0);
  if (spec.cross_modal) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < k; ++c) {
        image_scores[r * k + c] = rng.normal();
        text_scores[r * k + c] = rng.normal();
      }
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (image_scores[r * k + c] + text_scores[r * k + c] >
            image_scores[r * k + best] + text_scores[r * k + best]) {
          best = c;
        }
      }
      labels[r] = static_cast<int>(best);
    }
  } else {
    std::vector<double> probs = spec.label_skew;
    if (probs.empty()) probs.assign(k, 1.0);
    std::discrete_distribution<int> pick(probs.begin(), probs.end());
    for (int& l : labels) l = pick(rng.engine());
  }

  // Per-sample latent: class signal plus Gaussian jitter, part of which is
  // shared between the two modalities of a pair.
  const double shared = std::sqrt(spec.shared_fraction);
  const double own = std::sqrt(1.0 - spec.shared_fraction);
  MatrixD image_latent(n, d), text_latent(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double image_signal = 0.0, text_signal = 0.0;
      if (spec.cross_modal) {
        for (std::size_t j = 0; j < k; ++j) {
          image_signal += image_scores[r * k + j] * dirs[2 + j][c];
          text_signal += text_scores[r * k + j] * dirs[2 + j][c];
        }
      } else {
        image_signal = text_signal = dirs[2 + static_cast<std::size_t>(labels[r])][c];
      }
      const double common = shared * rng.normal(0.0, unit);
      image_latent(r, c) = spec.class_separation * unit * image_signal + common + own * rng.normal(0.0, unit);
      text_latent(r, c) = spec.class_separation * unit * text_signal + common + own * rng.normal(0.0, unit);
    }
  }

  const double s_image = solve_scale(center, image_latent, spec.image_variance, "image");
  const double s_text = solve_scale(center, text_latent, spec.text_variance, "text");
  const MatrixD image = place(center, image_latent, s_image);
  const MatrixD text_base = place(center, text_latent, s_text);

  auto gap_at = [&](double angle) {
    return mean_pair_distance(rotate(text_base, center, partner, angle), image);
  };
  double angle = 0.0;
  const double floor_gap = gap_at(0.0);
  // Independent jitter keeps paired rows apart even without a rotation.
  if (floor_gap - spec.gap_magnitude > std::max(0.1 * spec.gap_magnitude, 0.05)) {
    throw ConfigError("gap_magnitude " + std::to_string(spec.gap_magnitude) +
                      " is infeasible: these variances and shared_fraction already give a gap of " +
                      std::to_string(floor_gap) + " (raise shared_fraction or lower the variances)");
  }
  if (spec.gap_magnitude > floor_gap) {
    if (spec.gap_magnitude > gap_at(std::numbers::pi)) {
      throw ConfigError("gap_magnitude " + std::to_string(spec.gap_magnitude) +
                        " is not reachable with these variances");
    }
    angle = bisect(gap_at, spec.gap_magnitude, 0.0, std::numbers::pi, false);
  }
  const MatrixD text = rotate(text_base, center, partner, angle);

  SynthResult res;
  res.achieved_image_variance = mean_variance(image);
  res.achieved_text_variance = mean_variance(text);
  res.achieved_gap = mean_pair_distance(text, image);
  const std::string tag = "synthetic-" + std::string(to_string(spec.regime));
  res.dataset = make_paired(EmbeddingMatrix{Modality::image, image.cast<float>(), tag},
                            EmbeddingMatrix{Modality::text, text.cast<float>(), tag},
                            std::move(labels), spec.n_classes, derive_seed(spec.seed, 7),
                            {spec.train_fraction, false});
  return res;
}

}  // namespace gapfuse
