#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace gapfuse {

/// AdamW with decoupled weight decay. Defaults are the PyTorch ones.
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-2;
  };

  AdamW() = default;
  AdamW(std::size_t parameter_count, Options options);

  /// One update: param -= lr*wd*param, then the bias-corrected Adam step.
  void step(std::span<float> params, std::span<const float> grads);

  void reset();

  [[nodiscard]] const Options& options() const noexcept { return options_; }
  [[nodiscard]] std::uint64_t step_count() const noexcept { return step_; }
  [[nodiscard]] std::span<const double> first_moment() const noexcept { return m_; }
  [[nodiscard]] std::span<const double> second_moment() const noexcept { return v_; }

 private:
  Options options_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t step_ = 0;
};

}  // namespace gapfuse
