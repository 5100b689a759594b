#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "gapfuse/embedding_store.hpp"

namespace gapfuse {

enum class Regime { medical, general };

std::string_view to_string(Regime r);
Regime parse_regime(std::string_view text);

/// Generator settings. Variances are mean per-dimension variances of the
/// unit-normalized embeddings; gap_magnitude is the target mean paired
/// distance |text_i - image_i|.
struct SynthSpec {
  std::size_t n_samples = 1000;
  std::size_t dim = 128;
  std::size_t n_classes = 2;
  Regime regime = Regime::medical;
  double text_variance = 5.4e-4;
  double image_variance = 7.9e-5;
  double gap_magnitude = 0.8;
  double class_separation = 3.0;
  std::vector<double> label_skew;  // class probabilities; empty = uniform
  double shared_fraction = 0.5;    // share of the per-sample latent common to both modalities
  /// When set, each modality carries its own Gaussian score per class and the
  /// label is the argmax of the summed scores, so neither modality alone
  /// determines the class. label_skew is ignored.
  bool cross_modal = false;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  /// Tight low-variance clusters with a wide gap (text 5.4e-4, image 7.9e-5).
  static SynthSpec medical(std::uint64_t seed = 0);
  /// Looser clusters with a narrower gap (text 3e-3, image 1.7e-3).
  static SynthSpec general(std::uint64_t seed = 0);

  void validate() const;
};

struct SynthResult {
  PairedDataset dataset;
  double achieved_image_variance = 0.0;
  double achieved_text_variance = 0.0;
  double achieved_gap = 0.0;
};

/// Draws one modality center and per-class directions on the unit sphere,
/// builds image rows as normalize(center + s_img * latent) and text rows as
/// a rotated copy normalize(center + s_txt * latent') turned by an angle in
/// the (center, p) plane. The scales are solved so the measured variances hit
/// their targets, and the angle so the measured gap does.
SynthResult generate(const SynthSpec& spec);

}  // namespace gapfuse
