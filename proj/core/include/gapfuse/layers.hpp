#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gapfuse/matrix.hpp"
#include "gapfuse/ops.hpp"
#include "gapfuse/parameters.hpp"
#include "gapfuse/phase.hpp"
#include "gapfuse/random.hpp"

namespace gapfuse {

enum class LayerKind { dense, relu, dropout, batchnorm };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  double dropout_rate = 0.0;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out}; }
  static LayerSpec relu(std::size_t dim) { return {LayerKind::relu, dim, dim}; }
  static LayerSpec dropout(std::size_t dim, double rate) {
    return {LayerKind::dropout, dim, dim, rate};
  }
  static LayerSpec batchnorm(std::size_t dim, double epsilon = 1e-5, double momentum = 0.1) {
    return {LayerKind::batchnorm, dim, dim, 0.0, epsilon, momentum};
  }

  /// Throws ConfigError when the spec breaks its dimension or range rules.
  void validate() const;

  /// Learnable parameters this layer contributes.
  [[nodiscard]] std::size_t parameter_count() const;
};

/// dense -> ReLU -> dropout -> batchnorm, the feature-extraction block.
std::vector<LayerSpec> feature_block(std::size_t in_dim, std::size_t width, double dropout_rate,
                                     double bn_epsilon = 1e-5, double bn_momentum = 0.1);

/// A chain of layers whose parameters live in an external ParameterStore
/// (learnable) and a second store for non-learnable buffers (running stats).
/// forward() records what backward() needs; backward() consumes it.
class LayerStack {
 public:
  LayerStack() = default;
  LayerStack(std::string name, std::vector<LayerSpec> specs, ParameterStore& params,
             ParameterStore& buffers, Rng& init_rng);

  Matrix forward(const Matrix& input, Phase phase, const ParameterStore& params,
                 ParameterStore& buffers, Rng& dropout_rng);

  /// Accumulates parameter gradients into `params` and returns dL/dinput.
  Matrix backward(const Matrix& grad_output, ParameterStore& params);

  [[nodiscard]] const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] std::size_t input_dim() const { return specs_.front().in_dim; }
  [[nodiscard]] std::size_t output_dim() const { return specs_.back().out_dim; }
  [[nodiscard]] bool has_tape() const noexcept { return tape_.valid; }

 private:
  struct Slot {
    std::size_t first = 0;   // weights or gamma
    std::size_t second = 0;  // bias or beta
    std::size_t running_mean = 0;
    std::size_t running_var = 0;
  };
  struct Tape {
    bool valid = false;
    std::vector<Matrix> inputs;
    std::vector<std::vector<float>> masks;
    std::vector<ops::BatchNormCache<float>> bn;
  };

  std::string name_;
  std::vector<LayerSpec> specs_;
  std::vector<Slot> slots_;
  Tape tape_;
};

}  // namespace gapfuse
