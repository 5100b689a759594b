#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gapfuse {

struct ParameterSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  [[nodiscard]] std::size_t size() const noexcept { return rows * cols; }
};

/// Flat float storage with named segments and a parallel gradient buffer.
/// The optimizer sees one contiguous vector; layers address their segment.
class ParameterStore {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols, float fill = 0.0f);

  std::span<float> values(std::size_t segment);
  std::span<const float> values(std::size_t segment) const;
  std::span<float> grads(std::size_t segment);
  std::span<const float> grads(std::size_t segment) const;

  std::span<float> all_values() noexcept { return values_; }
  std::span<const float> all_values() const noexcept { return values_; }
  std::span<float> all_grads() noexcept { return grads_; }
  std::span<const float> all_grads() const noexcept { return grads_; }

  void zero_grad();

  [[nodiscard]] const std::vector<ParameterSegment>& segments() const noexcept { return segments_; }
  [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const;
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

 private:
  std::vector<ParameterSegment> segments_;
  std::vector<float> values_;
  std::vector<float> grads_;
};

}  // namespace gapfuse
