#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gapfuse/matrix.hpp"

namespace gapfuse {

enum class Modality { image, text };

std::string_view to_string(Modality m);

struct EmbeddingMatrix {
  Modality modality = Modality::image;
  Matrix values;
  std::string source_tag;

  [[nodiscard]] std::size_t rows() const noexcept { return values.rows(); }
  [[nodiscard]] std::size_t dim() const noexcept { return values.cols(); }
};

/// Reads one embedding per row. A first row whose first cell is not numeric
/// is treated as a header. Ragged rows and non-finite values are rejected
/// with their location.
EmbeddingMatrix load_csv(const std::filesystem::path& path, Modality modality,
                         std::optional<std::size_t> expected_dim = std::nullopt);

/// Writes shortest round-trip decimal representations, so load_csv(save_csv(m))
/// reproduces every float bit for bit.
void save_csv(const std::filesystem::path& path, const EmbeddingMatrix& m, bool header = false);

std::vector<int> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, std::span<const int> labels);

enum class Split : std::uint8_t { train, test };

struct PairedDataset {
  EmbeddingMatrix image;
  EmbeddingMatrix text;
  std::vector<int> labels;
  std::size_t n_classes = 0;
  std::vector<Split> split;
  std::vector<double> class_weights;

  [[nodiscard]] std::size_t rows() const noexcept { return labels.size(); }
  [[nodiscard]] std::vector<std::size_t> indices(Split which) const;
  [[nodiscard]] std::vector<int> labels_of(std::span<const std::size_t> idx) const;
};

struct SplitOptions {
  double train_fraction = 0.8;
  bool stratify = false;
};

/// Shuffles row indices under `seed`, assigns the first floor(N * fraction)
/// to train and computes class weights on the train portion.
PairedDataset make_paired(EmbeddingMatrix image, EmbeddingMatrix text, std::vector<int> labels,
                          std::size_t n_classes, std::uint64_t seed, SplitOptions options = {});

/// Weights proportional to 1 / count(c) over `rows`, scaled to mean 1.
/// Throws InputError when a class has no rows.
std::vector<double> inverse_frequency_weights(std::span<const int> labels,
                                              std::span<const std::size_t> rows,
                                              std::size_t n_classes);

struct ModalityStats {
  std::vector<double> per_dim_variance;  // population variance of unit-normalized rows
  double mean_variance = 0.0;            // mean over dimensions
  double mean_norm = 0.0;                // mean raw L2 norm
};

struct DatasetStats {
  ModalityStats image;
  ModalityStats text;
};

ModalityStats modality_stats(const Matrix& m);
DatasetStats dataset_stats(const PairedDataset& ds);

/// Plain-text key = value file naming the CSV files of a dataset. Relative
/// paths are resolved against the manifest's directory.
struct DatasetManifest {
  std::filesystem::path image_csv;
  std::filesystem::path text_csv;
  std::filesystem::path labels_csv;
  std::size_t n_classes = 0;  // 0: infer from labels
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  bool stratify = false;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);
PairedDataset load_dataset(const DatasetManifest& m);

}  // namespace gapfuse
