#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "gapfuse/layers.hpp"
#include "gapfuse/matrix.hpp"
#include "gapfuse/parameters.hpp"
#include "gapfuse/phase.hpp"
#include "gapfuse/random.hpp"

namespace gapfuse {

enum class FusionKind { early, late_joint };

std::string_view to_string(FusionKind kind);
FusionKind parse_fusion_kind(std::string_view text);

struct FusionConfig {
  FusionKind kind = FusionKind::early;
  std::size_t image_dim = 0;
  std::size_t text_dim = 0;
  std::size_t n_classes = 2;
  double dropout = 0.0;
  std::size_t hidden_early = 128;
  std::size_t hidden_late = 64;  // per branch
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  /// One logit for binary tasks, one per class otherwise.
  [[nodiscard]] std::size_t output_dim() const noexcept { return n_classes == 2 ? 1 : n_classes; }
  void validate() const;
};

/// Closed-form learnable parameter count of the head described by `cfg`.
std::size_t expected_parameter_count(const FusionConfig& cfg);

struct FusionOutput {
  Matrix logits;
  Matrix image_features;  // late_joint only: image branch output
  Matrix text_features;   // late_joint only: text branch output
};

/// Early fusion: [image | text] -> feature block -> dense head.
/// Late-joint fusion: image -> block, text -> block, concat -> dense head.
class FusionModel {
 public:
  static FusionModel build(const FusionConfig& cfg, std::uint64_t seed);

  FusionOutput forward(const Matrix& image, const Matrix& text, Phase phase);

  /// Accumulates parameter gradients. For late_joint, optional gradients with
  /// respect to the branch features are added before the branches run.
  void backward(const Matrix& grad_logits, const Matrix* grad_image_features = nullptr,
                const Matrix* grad_text_features = nullptr);

  void zero_grad() { params_.zero_grad(); }

  ParameterStore& parameters() noexcept { return params_; }
  const ParameterStore& parameters() const noexcept { return params_; }
  ParameterStore& buffers() noexcept { return buffers_; }
  const ParameterStore& buffers() const noexcept { return buffers_; }
  [[nodiscard]] const FusionConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.size(); }
  [[nodiscard]] const std::vector<LayerStack>& stacks() const noexcept { return stacks_; }

  /// JSON checkpoint tagged "gapfuse-ckpt-v1" with the build config, every
  /// named parameter segment and the batchnorm running statistics.
  void save(const std::filesystem::path& path) const;
  static FusionModel load(const std::filesystem::path& path);

 private:
  FusionModel() : dropout_rng_(0) {}

  FusionConfig cfg_;
  ParameterStore params_;
  ParameterStore buffers_;
  std::vector<LayerStack> stacks_;
  Rng dropout_rng_;
  bool taped_ = false;
};

}  // namespace gapfuse
