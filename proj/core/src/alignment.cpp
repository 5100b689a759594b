#include "gapfuse/alignment.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "gapfuse/error.hpp"
#include "gapfuse/geometry.hpp"
#include "gapfuse/random.hpp"

namespace gapfuse {

void AlignmentConfig::validate() const {
  if (!(noise_std >= 0.0)) throw ConfigError("alignment noise_std must be >= 0");
  if (!(reg_weight >= 0.0)) throw ConfigError("alignment reg_weight must be >= 0");
  if (!std::isfinite(lambda_shift)) throw ConfigError("alignment lambda must be finite");
}

std::vector<std::string> AlignmentConfig::warnings() const {
  std::vector<std::string> w;
  if (lambda_shift < -1.0 || lambda_shift > 1.0) {
    std::ostringstream os;
    os << "lambda " << lambda_shift << " lies outside the usual sweep range [-1, 1]";
    w.push_back(os.str());
  }
  return w;
}

Matrix inject_noise(const Matrix& m, double noise_std, std::uint64_t seed) {
  if (!(noise_std >= 0.0)) throw ConfigError("inject_noise: noise_std must be >= 0");
  if (noise_std == 0.0) return m;
  Matrix out = m;
  Rng rng(seed);
  for (float& v : out.data()) v = static_cast<float>(v + rng.normal(0.0, noise_std));
  return out;
}

EmbeddingMatrix inject_noise(const EmbeddingMatrix& m, double noise_std, std::uint64_t seed) {
  return EmbeddingMatrix{m.modality, inject_noise(m.values, noise_std, seed), m.source_tag};
}

std::vector<double> estimate_gap_vector(const PairedDataset& ds) {
  const auto train = ds.indices(Split::train);
  if (train.empty()) throw ConfigError("cannot estimate the modality gap without training rows");
  // Only train rows are normalized and read, so test rows cannot leak in.
  const Matrix image = normalize_rows(gather_rows(ds.image.values, std::span<const std::size_t>(train)));
  const Matrix text = normalize_rows(gather_rows(ds.text.values, std::span<const std::size_t>(train)));
  std::vector<std::size_t> all(train.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return mean_difference(image, text, all);
}

namespace {

void translate(Matrix& m, std::span<const double> offset, double scale, bool renormalize,
               std::string_view modality) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    double norm = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = static_cast<float>(row[c] + scale * offset[c]);
      norm += static_cast<double>(row[c]) * row[c];
    }
    if (!renormalize) continue;
    if (norm == 0.0) {
      throw InputError(std::string(modality) + " row " + std::to_string(r) +
                       " has zero norm after the shift");
    }
    norm = std::sqrt(norm);
    for (float& v : row) v = static_cast<float>(v / norm);
  }
}

}  // namespace

PairedDataset shift_embeddings(const PairedDataset& ds, double lambda, std::span<const double> gap,
                               bool renormalize) {
  if (gap.size() != ds.image.dim() || gap.size() != ds.text.dim()) {
    throw ConfigError("shift: gap vector of length " + std::to_string(gap.size()) +
                      " does not match embedding dims " + std::to_string(ds.image.dim()) + "/" +
                      std::to_string(ds.text.dim()));
  }
  PairedDataset out = ds;
  translate(out.text.values, gap, -0.5 * lambda, renormalize, "text");
  translate(out.image.values, gap, 0.5 * lambda, renormalize, "image");
  return out;
}

PairedDataset shift_align(const PairedDataset& ds, double lambda, bool renormalize) {
  PairedDataset unit = ds;
  unit.image = normalize_rows(ds.image);
  unit.text = normalize_rows(ds.text);
  const auto gap = estimate_gap_vector(unit);
  return shift_embeddings(unit, lambda, gap, renormalize);
}

PairedDataset apply_pipeline(const PairedDataset& ds, const AlignmentConfig& cfg, Phase phase,
                             std::uint64_t seed) {
  cfg.validate();
  const bool noisy = cfg.noise_std > 0.0 && (phase == Phase::train || cfg.noise_at_eval);
  const bool shifting = cfg.lambda_shift != 0.0;
  if (shifting && ds.image.dim() != ds.text.dim()) {
    throw ConfigError("align.lambda needs image and text embeddings of equal width, got " +
                      std::to_string(ds.image.dim()) + " and " + std::to_string(ds.text.dim()));
  }
  PairedDataset out = ds;
  std::vector<double> gap;
  if (shifting || cfg.renormalize) {
    out.image = normalize_rows(ds.image);
    out.text = normalize_rows(ds.text);
  }
  if (shifting) gap = estimate_gap_vector(out);
  if (noisy) {
    out.image = inject_noise(out.image, cfg.noise_std, derive_seed(seed, 1));
    out.text = inject_noise(out.text, cfg.noise_std, derive_seed(seed, 2));
  }
  if (shifting) return shift_embeddings(out, cfg.lambda_shift, gap, cfg.renormalize);
  if (cfg.renormalize && noisy) {
    out.image = normalize_rows(out.image);
    out.text = normalize_rows(out.text);
  }
  return out;
}

}  // namespace gapfuse
