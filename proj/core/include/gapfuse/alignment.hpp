#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gapfuse/embedding_store.hpp"
#include "gapfuse/matrix.hpp"
#include "gapfuse/phase.hpp"

namespace gapfuse {

struct AlignmentConfig {
  double noise_std = 0.01;    // sigma of the injected Gaussian
  double lambda_shift = 0.0;  // 1 closes the gap, negative widens it
  bool renormalize = true;    // project rows back onto the unit sphere
  double reg_weight = 0.0;    // multiplier on the branch alignment loss
  bool noise_at_eval = false;

  /// Throws ConfigError for negative noise or regularization weight.
  void validate() const;
  /// Non-fatal remarks, e.g. a shift outside [-1, 1].
  [[nodiscard]] std::vector<std::string> warnings() const;
};

/// input + N(0, noise_std^2) per coordinate.
Matrix inject_noise(const Matrix& m, double noise_std, std::uint64_t seed);
EmbeddingMatrix inject_noise(const EmbeddingMatrix& m, double noise_std, std::uint64_t seed);

/// Gap direction mean(text) - mean(image) of the unit-normalized train rows.
/// Test rows never enter the estimate.
std::vector<double> estimate_gap_vector(const PairedDataset& ds);

/// Translates text by -(lambda/2) g and image by +(lambda/2) g, then
/// optionally renormalizes rows. Pure translation when renormalize is false,
/// so shifting by lambda and then -lambda with the same g is the identity.
PairedDataset shift_embeddings(const PairedDataset& ds, double lambda, std::span<const double> gap,
                               bool renormalize);

/// Row-normalizes, estimates the gap on the train split and shifts.
PairedDataset shift_align(const PairedDataset& ds, double lambda, bool renormalize);

template <typename T>
struct RegLoss {
  double loss = 0.0;
  BasicMatrix<T> grad_text;
  BasicMatrix<T> grad_image;
};

/// (1 / 2N) sum_j |text_j - image_j|^2 with gradients for both inputs.
template <typename T>
RegLoss<T> reg_loss(const BasicMatrix<T>& text, const BasicMatrix<T>& image) {
  if (text.rows() != image.rows() || text.cols() != image.cols()) {
    throw ConfigError("reg_loss: text features " + text.shape() + " vs image features " +
                      image.shape());
  }
  const std::size_t n = text.rows();
  RegLoss<T> r{0.0, BasicMatrix<T>(n, text.cols()), BasicMatrix<T>(n, text.cols())};
  if (n == 0) return r;
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  auto t = text.data();
  auto i = image.data();
  auto gt = r.grad_text.data();
  auto gi = r.grad_image.data();
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double diff = static_cast<double>(t[k]) - i[k];
    sum += diff * diff;
    gt[k] = static_cast<T>(diff * inv_n);
    gi[k] = static_cast<T>(-diff * inv_n);
  }
  r.loss = 0.5 * sum * inv_n;
  return r;
}

/// Unit-normalizes rows (when shifting or renormalizing), adds noise (train
/// phase, or eval when noise_at_eval), then applies the lambda shift and
/// renormalization. The gap direction comes from the clean
/// train split, so both phases shift by the same vector.
PairedDataset apply_pipeline(const PairedDataset& ds, const AlignmentConfig& cfg, Phase phase,
                             std::uint64_t seed);

}  // namespace gapfuse
