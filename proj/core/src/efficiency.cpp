#include "gapfuse/efficiency.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "gapfuse/error.hpp"
#include "gapfuse/fusion_model.hpp"

namespace gapfuse {

std::size_t batch_memory(std::span<const TensorShape> tensors, std::size_t element_size) {
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.numel * element_size;
  return total;
}

std::size_t label_width(std::size_t n_classes) { return n_classes <= 2 ? 1 : n_classes; }

std::size_t batch_memory(std::size_t rows, std::size_t image_dim, std::size_t text_dim,
                         std::size_t label_width) {
  std::vector<TensorShape> t{{"image", rows * image_dim}, {"text", rows * text_dim}};
  if (label_width > 0) t.push_back({"labels", rows * label_width});
  return batch_memory(t);
}

std::size_t epoch_memory(std::size_t rows, std::size_t batch_size, std::size_t image_dim,
                         std::size_t text_dim, std::size_t label_width) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::size_t total = 0;
  for (std::size_t start = 0; start < rows; start += batch_size) {
    total += batch_memory(std::min(batch_size, rows - start), image_dim, text_dim, label_width);
  }
  return total;
}

std::size_t model_memory(const FusionModel& model) { return model_memory(model.parameter_count()); }

std::size_t model_memory(std::size_t parameter_count) { return parameter_count * kElementSize; }

double to_mib(std::size_t bytes) { return static_cast<double>(bytes) / (1024.0 * 1024.0); }

std::string format_megabytes(std::size_t bytes, bool si) {
  const double mb = si ? static_cast<double>(bytes) / 1e6 : to_mib(bytes);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f MB", mb);
  return buf;
}

std::string format_efficiency_table(std::span<const EfficiencyRow> rows, bool si,
                                    bool include_timing) {
  std::vector<std::string> header{"Dataset", "Approach", "Fusion", "Model Size",
                                  "Train Set / Epoch", "Test Set / Epoch"};
  if (include_timing) {
    header.emplace_back("Train [s/epoch]");
    header.emplace_back("Inference [s/epoch]");
  }
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::vector<std::string> line{r.dataset, r.approach, r.fusion,
                                  format_megabytes(r.report.model_size_bytes, si),
                                  format_megabytes(r.report.train_set_bytes_per_epoch, si),
                                  format_megabytes(r.report.test_set_bytes_per_epoch, si)};
    if (include_timing) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", r.report.avg_train_seconds_per_epoch);
      line.emplace_back(buf);
      std::snprintf(buf, sizeof(buf), "%.4f", r.report.avg_inference_seconds_per_epoch);
      line.emplace_back(buf);
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) os << "  ";
      // Text columns left-aligned, numbers right-aligned.
      if (c < 3) {
        os << line[c] << std::string(width[c] - line[c].size(), ' ');
      } else {
        os << std::string(width[c] - line[c].size(), ' ') << line[c];
      }
    }
    os << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& line : cells) emit(line);
  return os.str();
}

}  // namespace gapfuse
