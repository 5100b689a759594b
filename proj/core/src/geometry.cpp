#include "gapfuse/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gapfuse/error.hpp"
#include "gapfuse/random.hpp"

namespace gapfuse {

double GapReport::gap_vector_norm() const {
  double s = 0.0;
  for (double g : gap_vector) s += g * g;
  return std::sqrt(s);
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double norm = 0.0;
    for (float v : row) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw InputError("cannot normalize zero-norm row " + std::to_string(r));
    for (float& v : row) v = static_cast<float>(v / norm);
  }
  return out;
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  return EmbeddingMatrix{m.modality, normalize_rows(m.values), m.source_tag};
}

namespace {

template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw ConfigError("cosine: length mismatch " + std::to_string(u.size()) + " vs " +
                      std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw InputError("cosine of a zero vector is undefined");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

}  // namespace

double cosine(std::span<const float> u, std::span<const float> v) { return cosine_impl(u, v); }
double cosine(std::span<const double> u, std::span<const double> v) { return cosine_impl(u, v); }

std::vector<double> mean_difference(const Matrix& image, const Matrix& text,
                                    std::span<const std::size_t> rows) {
  if (image.cols() != text.cols()) {
    throw ConfigError("modality gap needs equal dimensions, image " + image.shape() + " vs text " +
                      text.shape());
  }
  std::vector<double> g(image.cols(), 0.0);
  if (rows.empty()) return g;
  std::vector<double> mt(image.cols(), 0.0), mi(image.cols(), 0.0);
  for (auto r : rows) {
    auto t = text.row(r);
    auto i = image.row(r);
    for (std::size_t c = 0; c < g.size(); ++c) {
      mt[c] += t[c];
      mi[c] += i[c];
    }
  }
  const double n = static_cast<double>(rows.size());
  for (std::size_t c = 0; c < g.size(); ++c) g[c] = mt[c] / n - mi[c] / n;
  return g;
}

GapReport measure_gap(const Matrix& image_in, const Matrix& text_in, bool normalize) {
  if (image_in.rows() != text_in.rows() || image_in.cols() != text_in.cols()) {
    throw ConfigError("measure_gap: image " + image_in.shape() + " and text " + text_in.shape() +
                      " must have the same shape");
  }
  const Matrix image = normalize ? normalize_rows(image_in) : image_in;
  const Matrix text = normalize ? normalize_rows(text_in) : text_in;
  GapReport rep;
  std::vector<std::size_t> all(image.rows());
  std::iota(all.begin(), all.end(), 0);
  rep.gap_vector = mean_difference(image, text, all);
  const std::size_t n = image.rows();
  double dist = 0.0, cos_sum = 0.0;
  std::size_t cos_count = 0;
  for (std::size_t r = 0; r < n; ++r) {
    auto t = text.row(r);
    auto i = image.row(r);
    double d2 = 0.0, dot = 0.0, nt = 0.0, ni = 0.0;
    for (std::size_t c = 0; c < t.size(); ++c) {
      const double diff = static_cast<double>(t[c]) - i[c];
      d2 += diff * diff;
      dot += static_cast<double>(t[c]) * i[c];
      nt += static_cast<double>(t[c]) * t[c];
      ni += static_cast<double>(i[c]) * i[c];
    }
    dist += std::sqrt(d2);
    if (nt > 0.0 && ni > 0.0) {
      cos_sum += std::clamp(dot / std::sqrt(nt * ni), -1.0, 1.0);
      ++cos_count;
    }
  }
  if (n > 0) rep.gap_scalar = dist / static_cast<double>(n);
  if (cos_count > 0) rep.mean_cross_modal_cosine = cos_sum / static_cast<double>(cos_count);
  rep.image_variance = modality_stats(image).mean_variance;
  rep.text_variance = modality_stats(text).mean_variance;
  return rep;
}

GapReport measure_gap(const PairedDataset& ds, bool normalize) {
  return measure_gap(ds.image.values, ds.text.values, normalize);
}

std::vector<MatrixD> random_stack_outputs(const RandomLayerFamily& family, const MatrixD& inputs,
                                          std::uint64_t seed) {
  if (family.depth == 0 || family.out_dim == 0) {
    throw ConfigError("random layer family needs depth >= 1 and out_dim >= 1");
  }
  Rng rng(seed);
  std::vector<MatrixD> outs;
  outs.reserve(family.depth + 1);
  outs.push_back(inputs);
  for (std::size_t l = 0; l < family.depth; ++l) {
    const MatrixD& x = outs.back();
    const std::size_t in = x.cols(), out = family.out_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out), b(out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    for (double& v : b) v = rng.uniform(-bound, bound);
    if (family.nonnegative_weights) {
      for (double& v : w) v = std::abs(v);
      for (double& v : b) v = std::abs(v);
    }
    MatrixD y(x.rows(), out);
    for (std::size_t n = 0; n < x.rows(); ++n) {
      auto xr = x.row(n);
      for (std::size_t j = 0; j < out; ++j) {
        double acc = b[j];
        const double* wj = w.data() + j * in;
        for (std::size_t k = 0; k < in; ++k) acc += wj[k] * xr[k];
        y(n, j) = family.relu ? std::max(acc, 0.0) : acc;
      }
    }
    outs.push_back(std::move(y));
  }
  return outs;
}

VarianceDecomposition variance_decomposition(const RandomLayerFamily& family, const Matrix& inputs,
                                             std::size_t n_inits, std::uint64_t seed,
                                             bool resample_weights) {
  if (n_inits < 2) throw ConfigError("variance_decomposition needs n_inits >= 2");
  if (inputs.rows() < 2) throw ConfigError("variance_decomposition needs at least 2 input rows");
  const MatrixD x = inputs.cast<double>();
  const std::size_t d = family.out_dim;
  const std::size_t n = x.rows();
  // Per init: coordinatewise mean and (population) variance over rows.
  std::vector<std::vector<double>> means(n_inits, std::vector<double>(d));
  std::vector<std::vector<double>> vars(n_inits, std::vector<double>(d));
  for (std::size_t t = 0; t < n_inits; ++t) {
    const auto s = resample_weights ? derive_seed(seed, t) : derive_seed(seed, 0);
    const MatrixD h = random_stack_outputs(family, x, s).back();
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0;
      for (std::size_t r = 0; r < n; ++r) m += h(r, j);
      m /= static_cast<double>(n);
      double v = 0.0;
      for (std::size_t r = 0; r < n; ++r) v += (h(r, j) - m) * (h(r, j) - m);
      means[t][j] = m;
      vars[t][j] = v / static_cast<double>(n);
    }
  }
  // Pooled total variance over all (init, row) samples, from per-init
  // moments: E[h^2] - E[h]^2 with E over the pooled sample.
  VarianceDecomposition out;
  const double inv_t = 1.0 / static_cast<double>(n_inits);
  for (std::size_t j = 0; j < d; ++j) {
    double grand = 0.0, second = 0.0, data = 0.0;
    for (std::size_t t = 0; t < n_inits; ++t) {
      grand += means[t][j];
      second += vars[t][j] + means[t][j] * means[t][j];
      data += vars[t][j];
    }
    grand *= inv_t;
    second *= inv_t;
    data *= inv_t;
    double weight = 0.0;
    for (std::size_t t = 0; t < n_inits; ++t) weight += (means[t][j] - grand) * (means[t][j] - grand);
    weight *= inv_t;
    out.total += second - grand * grand;
    out.data_component += data;
    out.weight_component += weight;
  }
  out.total /= static_cast<double>(d);
  out.data_component /= static_cast<double>(d);
  out.weight_component /= static_cast<double>(d);
  return out;
}

std::vector<ConeLevel> cone_probe(std::size_t depth, std::size_t width, const Matrix& u,
                                  const Matrix& v, std::size_t n_inits, std::uint64_t seed,
                                  const ConeProbeOptions& options) {
  if (u.rows() != v.rows() || u.cols() != v.cols()) {
    throw ConfigError("cone_probe: paired inputs must share a shape, got " + u.shape() + " and " +
                      v.shape());
  }
  if (n_inits == 0) throw ConfigError("cone_probe needs n_inits >= 1");
  const std::size_t pairs = u.rows();
  // Stack u over v so both members of a pair go through the same weights.
  MatrixD stacked(2 * pairs, u.cols());
  for (std::size_t r = 0; r < pairs; ++r) {
    std::copy(u.row(r).begin(), u.row(r).end(), stacked.row(r).begin());
    std::copy(v.row(r).begin(), v.row(r).end(), stacked.row(pairs + r).begin());
  }
  auto mean_pair_cosine = [&](const MatrixD& m) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < pairs; ++r) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      auto a = m.row(r);
      auto b = m.row(pairs + r);
      for (std::size_t c = 0; c < a.size(); ++c) {
        dot += a[c] * b[c];
        na += a[c] * a[c];
        nb += b[c] * b[c];
      }
      if (na == 0.0 || nb == 0.0) continue;  // dead pair: cosine undefined
      sum += std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
      ++count;
    }
    return count ? sum / static_cast<double>(count) : 0.0;
  };

  std::vector<ConeLevel> levels(depth + 1);
  for (std::size_t l = 0; l <= depth; ++l) {
    levels[l].depth = l;
    levels[l].per_init.reserve(n_inits);
  }
  const double input_cos = mean_pair_cosine(stacked);
  RandomLayerFamily family{width, depth, true, options.nonnegative_weights};
  for (std::size_t t = 0; t < n_inits; ++t) {
    levels[0].per_init.push_back(input_cos);
    if (depth == 0) continue;
    const auto outs = random_stack_outputs(family, stacked, derive_seed(seed, t));
    for (std::size_t l = 1; l <= depth; ++l) levels[l].per_init.push_back(mean_pair_cosine(outs[l]));
  }

  Rng boot(derive_seed(seed, 0xb007));
  const double alpha = (1.0 - options.confidence) / 2.0;
  std::vector<double> resampled(options.bootstrap_resamples);
  for (auto& level : levels) {
    const auto& x = level.per_init;
    level.mean_cosine = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    if (options.bootstrap_resamples == 0) {
      level.ci_low = level.ci_high = level.mean_cosine;
      continue;
    }
    for (auto& r : resampled) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += x[boot.index(x.size())];
      r = s / static_cast<double>(x.size());
    }
    std::sort(resampled.begin(), resampled.end());
    const auto at = [&](double q) {
      const auto idx = static_cast<std::size_t>(q * static_cast<double>(resampled.size() - 1));
      return resampled[idx];
    };
    level.ci_low = at(alpha);
    level.ci_high = at(1.0 - alpha);
  }
  return levels;
}

PcaResult pca_project(std::span<const Matrix> inputs, std::size_t k) {
  if (inputs.empty()) throw ConfigError("pca_project needs at least one matrix");
  const std::size_t d = inputs.front().cols();
  std::size_t total_rows = 0;
  for (const auto& m : inputs) {
    if (m.cols() != d) {
      throw ConfigError("pca_project: all inputs need " + std::to_string(d) + " columns, got " +
                        m.shape());
    }
    total_rows += m.rows();
  }
  if (k == 0 || k > d) {
    throw ConfigError("pca_project: k = " + std::to_string(k) + " must be in [1, " +
                      std::to_string(d) + "]");
  }
  if (total_rows < k) {
    throw ConfigError("pca_project: " + std::to_string(total_rows) + " rows cannot give " +
                      std::to_string(k) + " components");
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(total_rows), static_cast<Eigen::Index>(d));
  Eigen::Index r0 = 0;
  for (const auto& m : inputs) {
    for (std::size_t r = 0; r < m.rows(); ++r, ++r0) {
      for (std::size_t c = 0; c < d; ++c) x(r0, static_cast<Eigen::Index>(c)) = m(r, c);
    }
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const double denom = total_rows > 1 ? static_cast<double>(total_rows - 1) : 1.0;

  Eigen::MatrixXd axes(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
  std::vector<double> top(k);
  double trace = 0.0;
  if (d <= 2048) {
    const Eigen::MatrixXd cov = (x.transpose() * x) / denom;
    trace = cov.trace();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("pca_project: eigendecomposition failed");
    const auto n = static_cast<Eigen::Index>(d);
    for (std::size_t i = 0; i < k; ++i) {
      const auto col = n - 1 - static_cast<Eigen::Index>(i);  // ascending order
      axes.col(static_cast<Eigen::Index>(i)) = eig.eigenvectors().col(col);
      top[i] = std::max(0.0, eig.eigenvalues()(col));
    }
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    trace = s.squaredNorm() / denom;
    for (std::size_t i = 0; i < k; ++i) {
      axes.col(static_cast<Eigen::Index>(i)) = svd.matrixV().col(static_cast<Eigen::Index>(i));
      top[i] = s(static_cast<Eigen::Index>(i)) * s(static_cast<Eigen::Index>(i)) / denom;
    }
  }

  PcaResult res;
  res.components = MatrixD(k, d);
  res.mean.assign(mean.data(), mean.data() + d);
  for (std::size_t i = 0; i < k; ++i) {
    auto a = axes.col(static_cast<Eigen::Index>(i));
    Eigen::Index arg = 0;
    a.cwiseAbs().maxCoeff(&arg);
    if (a(arg) < 0) a = -a;
    for (std::size_t c = 0; c < d; ++c) res.components(i, c) = a(static_cast<Eigen::Index>(c));
    res.explained_variance_ratio.push_back(trace > 0.0 ? top[i] / trace : 0.0);
  }
  const Eigen::MatrixXd proj = x * axes;
  r0 = 0;
  for (const auto& m : inputs) {
    Matrix p(m.rows(), k);
    for (std::size_t r = 0; r < m.rows(); ++r, ++r0) {
      for (std::size_t i = 0; i < k; ++i) p(r, i) = static_cast<float>(proj(r0, static_cast<Eigen::Index>(i)));
    }
    res.projections.push_back(std::move(p));
  }
  return res;
}

void write_pca_csv(const std::filesystem::path& path, const PcaResult& pca,
                   std::span<const std::string> group_names) {
  if (group_names.size() != pca.projections.size()) {
    throw ConfigError("write_pca_csv: " + std::to_string(group_names.size()) + " names for " +
                      std::to_string(pca.projections.size()) + " projections");
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "group,row";
  for (std::size_t i = 0; i < pca.explained_variance_ratio.size(); ++i) out << ",pc" << i + 1;
  out << '\n';
  out.precision(9);
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    const auto& p = pca.projections[g];
    for (std::size_t r = 0; r < p.rows(); ++r) {
      out << group_names[g] << ',' << r;
      for (float v : p.row(r)) out << ',' << v;
      out << '\n';
    }
  }
  if (!out) throw ParseError("write failed for " + path.string());
}

}  // namespace gapfuse
