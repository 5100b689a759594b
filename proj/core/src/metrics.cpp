#include "gapfuse/metrics.hpp"

#include <string>
#include <vector>

#include "gapfuse/error.hpp"

namespace gapfuse {

namespace {
void check_lengths(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw ConfigError("metrics: " + std::to_string(truth.size()) + " labels vs " +
                      std::to_string(predicted.size()) + " predictions");
  }
}

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}
}  // namespace

double accuracy(std::span<const int> truth, std::span<const int> predicted) {
  check_lengths(truth, predicted);
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double binary_f1(std::span<const int> truth, std::span<const int> predicted, int positive) {
  check_lengths(truth, predicted);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == positive, p = predicted[i] == positive;
    tp += t && p;
    fp += !t && p;
    fn += t && !p;
  }
  return f1_from_counts(tp, fp, fn);
}

double macro_f1(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes) {
  check_lengths(truth, predicted);
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (t >= n_classes || p >= n_classes) throw InputError("macro_f1: label outside [0, n_classes)");
    if (t == p) {
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (tp[c] + fp[c] + fn[c] == 0) continue;
    sum += f1_from_counts(tp[c], fp[c], fn[c]);
    ++present;
  }
  return present ? sum / static_cast<double>(present) : 0.0;
}

double task_f1(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes) {
  return n_classes == 2 ? binary_f1(truth, predicted) : macro_f1(truth, predicted, n_classes);
}

}  // namespace gapfuse
