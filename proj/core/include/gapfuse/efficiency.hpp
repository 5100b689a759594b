#pragma once

#include <chrono>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gapfuse {

class FusionModel;

/// 32-bit floats throughout.
inline constexpr std::size_t kElementSize = 4;

struct TensorShape {
  std::string name;
  std::size_t numel = 0;
};

/// Memory of a batch, accounted as sum(numel) * element_size.
std::size_t batch_memory(std::span<const TensorShape> tensors, std::size_t element_size = kElementSize);

/// Label elements per row: one target for binary tasks, a one-hot row of
/// n_classes otherwise.
std::size_t label_width(std::size_t n_classes);

/// rows x image_dim + rows x text_dim + rows x label_width elements.
std::size_t batch_memory(std::size_t rows, std::size_t image_dim, std::size_t text_dim,
                         std::size_t label_width = 1);

/// Sum of batch_memory over every batch of one pass through `rows` samples.
std::size_t epoch_memory(std::size_t rows, std::size_t batch_size, std::size_t image_dim,
                         std::size_t text_dim, std::size_t label_width = 1);

std::size_t model_memory(const FusionModel& model);
std::size_t model_memory(std::size_t parameter_count);

/// Binary megabytes (2^20 bytes), the unit the reference tables use.
double to_mib(std::size_t bytes);

/// "50.86 MB": MiB labelled MB by default, decimal megabytes when si is set.
std::string format_megabytes(std::size_t bytes, bool si = false);

struct EfficiencyReport {
  std::size_t model_size_bytes = 0;
  std::size_t train_set_bytes_per_epoch = 0;
  std::size_t test_set_bytes_per_epoch = 0;
  double avg_train_seconds_per_epoch = 0.0;
  double avg_inference_seconds_per_epoch = 0.0;
  std::size_t element_size = kElementSize;

  friend bool operator==(const EfficiencyReport&, const EfficiencyReport&) = default;
};

struct EfficiencyRow {
  std::string dataset;
  std::string approach;
  std::string fusion;
  EfficiencyReport report;
};

/// Aligned plain-text table: dataset, approach, fusion, model size, train
/// and test set size per epoch, mean train and inference seconds per epoch.
std::string format_efficiency_table(std::span<const EfficiencyRow> rows, bool si = false,
                                    bool include_timing = true);

/// Monotonic wall-clock stopwatch.
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  void restart() { start_ = std::chrono::steady_clock::now(); }
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Wall-clock seconds spent in `fn`.
template <typename Fn>
double timed_epoch(Fn&& fn) {
  Stopwatch sw;
  std::forward<Fn>(fn)();
  return sw.seconds();
}

/// Running mean of per-epoch durations.
class EpochTimer {
 public:
  void record(double seconds) {
    total_ += seconds;
    ++count_;
  }
  [[nodiscard]] double mean() const { return count_ ? total_ / static_cast<double>(count_) : 0.0; }
  [[nodiscard]] std::size_t count() const { return count_; }

 private:
  double total_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace gapfuse
