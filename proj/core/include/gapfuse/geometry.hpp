#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gapfuse/embedding_store.hpp"
#include "gapfuse/matrix.hpp"

namespace gapfuse {

/// Modality-gap summary of a paired dataset.
struct GapReport {
  std::vector<double> gap_vector;  // mean(text) - mean(image)
  double gap_scalar = 0.0;         // mean over pairs of |text_i - image_i|
  double image_variance = 0.0;     // mean per-dimension variance
  double text_variance = 0.0;
  double mean_cross_modal_cosine = 0.0;

  [[nodiscard]] double gap_vector_norm() const;
};

/// Scales every row to unit L2 norm. Throws InputError naming the first
/// zero-norm row.
Matrix normalize_rows(const Matrix& m);
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

/// u.v / (|u||v|), clamped to [-1, 1]. Throws InputError on a zero vector.
double cosine(std::span<const float> u, std::span<const float> v);
double cosine(std::span<const double> u, std::span<const double> v);

GapReport measure_gap(const Matrix& image, const Matrix& text, bool normalize = true);
GapReport measure_gap(const PairedDataset& ds, bool normalize = true);

/// mean(text) - mean(image) over the given rows, with rows used as supplied.
std::vector<double> mean_difference(const Matrix& image, const Matrix& text,
                                    std::span<const std::size_t> rows);

/// Randomly initialized affine(+ReLU) stack, same init as the dense layers
/// of the fusion heads: weights and biases uniform in +-1/sqrt(fan_in).
struct RandomLayerFamily {
  std::size_t out_dim = 16;
  std::size_t depth = 1;
  bool relu = true;
  bool nonnegative_weights = false;
};

/// One realisation of a RandomLayerFamily applied to `inputs`, returning the
/// output of every layer (index 0 is the input itself).
std::vector<MatrixD> random_stack_outputs(const RandomLayerFamily& family, const MatrixD& inputs,
                                          std::uint64_t seed);

struct VarianceDecomposition {
  double total = 0.0;
  double data_component = 0.0;    // mean over inits of the within-init variance
  double weight_component = 0.0;  // variance over inits of the per-init mean
};

/// Monte Carlo split of output variance into a data part and a weight part,
/// computed coordinatewise and averaged over output coordinates. With
/// `resample_weights = false` every init reuses the weights drawn from `seed`.
VarianceDecomposition variance_decomposition(const RandomLayerFamily& family, const Matrix& inputs,
                                             std::size_t n_inits, std::uint64_t seed,
                                             bool resample_weights = true);

struct ConeLevel {
  std::size_t depth = 0;
  double mean_cosine = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> per_init;  // mean pair cosine for each init
};

struct ConeProbeOptions {
  bool nonnegative_weights = false;
  std::size_t bootstrap_resamples = 1000;
  double confidence = 0.95;
};

/// Mean cosine between paired rows of `u` and `v` after each layer of
/// randomly initialized dense+ReLU stacks. Result has depth + 1 entries;
/// entry 0 is the input.
std::vector<ConeLevel> cone_probe(std::size_t depth, std::size_t width, const Matrix& u,
                                  const Matrix& v, std::size_t n_inits, std::uint64_t seed,
                                  const ConeProbeOptions& options = {});

struct PcaResult {
  std::vector<Matrix> projections;  // one per input matrix, rows x k
  std::vector<double> explained_variance_ratio;
  MatrixD components;  // k x D, rows are unit principal axes
  std::vector<double> mean;
};

/// Fits one PCA on the row-concatenation of all inputs, so every modality is
/// projected onto shared axes. Each component's largest-magnitude loading is
/// made positive.
PcaResult pca_project(std::span<const Matrix> inputs, std::size_t k = 2);

/// CSV with columns `group,row,pc1..pck`.
void write_pca_csv(const std::filesystem::path& path, const PcaResult& pca,
                   std::span<const std::string> group_names);

}  // namespace gapfuse
