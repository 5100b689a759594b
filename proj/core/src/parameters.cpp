#include "gapfuse/parameters.hpp"

#include <algorithm>

#include "gapfuse/error.hpp"

namespace gapfuse {

std::size_t ParameterStore::add(std::string name, std::size_t rows, std::size_t cols, float fill) {
  if (find(name)) throw ConfigError("duplicate parameter segment '" + name + "'");
  segments_.push_back({std::move(name), values_.size(), rows, cols});
  values_.resize(values_.size() + rows * cols, fill);
  grads_.resize(values_.size(), 0.0f);
  return segments_.size() - 1;
}

std::span<float> ParameterStore::values(std::size_t segment) {
  const auto& s = segments_.at(segment);
  return std::span<float>(values_).subspan(s.offset, s.size());
}

std::span<const float> ParameterStore::values(std::size_t segment) const {
  const auto& s = segments_.at(segment);
  return std::span<const float>(values_).subspan(s.offset, s.size());
}

std::span<float> ParameterStore::grads(std::size_t segment) {
  const auto& s = segments_.at(segment);
  return std::span<float>(grads_).subspan(s.offset, s.size());
}

std::span<const float> ParameterStore::grads(std::size_t segment) const {
  const auto& s = segments_.at(segment);
  return std::span<const float>(grads_).subspan(s.offset, s.size());
}

void ParameterStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0f); }

std::optional<std::size_t> ParameterStore::find(std::string_view name) const {
  auto it = std::find_if(segments_.begin(), segments_.end(),
                         [&](const ParameterSegment& s) { return s.name == name; });
  if (it == segments_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - segments_.begin());
}

}  // namespace gapfuse
