#pragma once

#include <cstddef>
#include <span>

namespace gapfuse {

double accuracy(std::span<const int> truth, std::span<const int> predicted);

/// F1 of the positive class; 0 when there are no true positives.
double binary_f1(std::span<const int> truth, std::span<const int> predicted, int positive = 1);

/// Unweighted mean of per-class F1 over classes present in truth or predictions.
double macro_f1(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes);

/// Binary F1 for two classes, macro F1 otherwise.
double task_f1(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes);

}  // namespace gapfuse
