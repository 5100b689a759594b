#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "gapfuse/error.hpp"

namespace gapfuse {

/// Dense row-major matrix. Persisted numerics use the float instantiation;
/// the double one exists for high-precision gradient checks.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ConfigError("matrix data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_string(rows_, cols_));
    }
  }
  BasicMatrix(std::initializer_list<std::initializer_list<T>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
      if (r.size() != cols_) throw ConfigError("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  template <typename U>
  [[nodiscard]] BasicMatrix<U> cast() const {
    BasicMatrix<U> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.data().begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  [[nodiscard]] std::string shape() const { return shape_string(rows_, cols_); }

  static std::string shape_string(std::size_t r, std::size_t c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
  }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

/// Copies the listed rows, in order.
template <typename T>
BasicMatrix<T> gather_rows(const BasicMatrix<T>& m, std::span<const std::size_t> indices) {
  BasicMatrix<T> out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = m.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

/// [a | b] column concatenation.
template <typename T>
BasicMatrix<T> hconcat(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw ConfigError("hconcat row mismatch: " + a.shape() + " vs " + b.shape());
  }
  BasicMatrix<T> out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

/// Splits columns [0, left_cols) and [left_cols, cols).
template <typename T>
std::pair<BasicMatrix<T>, BasicMatrix<T>> hsplit(const BasicMatrix<T>& m, std::size_t left_cols) {
  BasicMatrix<T> left(m.rows(), left_cols), right(m.rows(), m.cols() - left_cols);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(left_cols), left.row(r).begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(left_cols), src.end(), right.row(r).begin());
  }
  return {std::move(left), std::move(right)};
}

}  // namespace gapfuse
