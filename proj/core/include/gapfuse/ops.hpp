#pragma once

// Forward/backward kernels for the handful of layers the fusion heads use.
// Templated on the element type so the same code path can be checked in
// double precision; the models themselves run in float with double
// accumulators.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gapfuse/error.hpp"
#include "gapfuse/matrix.hpp"
#include "gapfuse/random.hpp"

namespace gapfuse::ops {

/// Dot product with eight fixed partial sums: vectorizes without
/// reassociation flags and always adds in the same order.
template <typename T>
T dot_lanes(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 8;
  T lanes[kLanes] = {};
  std::size_t k = 0;
  for (; k + kLanes <= n; k += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += a[k + l] * b[k + l];
  }
  T tail = 0;
  for (; k < n; ++k) tail += a[k] * b[k];
  return ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7])) +
         tail;
}

template <typename T>
BasicMatrix<T> dense_forward(const BasicMatrix<T>& input, std::span<const T> weights,
                             std::span<const T> bias) {
  const std::size_t in_dim = input.cols();
  const std::size_t out_dim = bias.size();
  if (weights.size() != out_dim * in_dim) {
    throw ConfigError("dense_forward: input " + input.shape() + " incompatible with weights " +
                      BasicMatrix<T>::shape_string(out_dim, out_dim ? weights.size() / out_dim : 0));
  }
  BasicMatrix<T> out(input.rows(), out_dim);
  for (std::size_t n = 0; n < input.rows(); ++n) {
    auto x = input.row(n);
    auto y = out.row(n);
    for (std::size_t j = 0; j < out_dim; ++j) {
      y[j] = bias[j] + dot_lanes(weights.data() + j * in_dim, x.data(), in_dim);
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> dense_forward(const BasicMatrix<T>& input, const BasicMatrix<T>& weights,
                             std::span<const T> bias) {
  if (weights.cols() != input.cols() || weights.rows() != bias.size()) {
    throw ConfigError("dense_forward: input " + input.shape() + " incompatible with weights " +
                      weights.shape() + " and bias of length " + std::to_string(bias.size()));
  }
  return dense_forward(input, weights.data(), bias);
}

/// Accumulates dL/dW and dL/db into the provided buffers and returns dL/dinput.
template <typename T>
BasicMatrix<T> dense_backward(const BasicMatrix<T>& input, std::span<const T> weights,
                              const BasicMatrix<T>& grad_out, std::span<T> grad_weights,
                              std::span<T> grad_bias) {
  const std::size_t in_dim = input.cols();
  const std::size_t out_dim = grad_out.cols();
  if (grad_out.rows() != input.rows() || weights.size() != in_dim * out_dim ||
      grad_weights.size() != weights.size() || grad_bias.size() != out_dim) {
    throw ConfigError("dense_backward: shape mismatch between input " + input.shape() +
                      " and output gradient " + grad_out.shape());
  }
  BasicMatrix<T> grad_in(input.rows(), in_dim);
  for (std::size_t n = 0; n < input.rows(); ++n) {
    const T* x = input.row(n).data();
    auto g = grad_out.row(n);
    T* gi = grad_in.row(n).data();
    for (std::size_t j = 0; j < out_dim; ++j) {
      const T gj = g[j];
      if (gj == T(0)) continue;
      grad_bias[j] += gj;
      const T* w = weights.data() + j * in_dim;
      T* gwj = grad_weights.data() + j * in_dim;
      for (std::size_t k = 0; k < in_dim; ++k) gwj[k] += gj * x[k];
      for (std::size_t k = 0; k < in_dim; ++k) gi[k] += gj * w[k];
    }
  }
  return grad_in;
}

template <typename T>
BasicMatrix<T> relu(const BasicMatrix<T>& input) {
  BasicMatrix<T> out = input;
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

/// Gradient of ReLU given the layer input. The subgradient at 0 is taken as 0.
template <typename T>
BasicMatrix<T> relu_backward(const BasicMatrix<T>& input, const BasicMatrix<T>& grad_out) {
  BasicMatrix<T> grad = grad_out;
  auto x = input.data();
  auto g = grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > T{0})) g[i] = T{0};
  }
  return grad;
}

/// Inverted dropout. `mask` receives the per-element scale (0 or 1/(1-rate)).
template <typename T>
BasicMatrix<T> dropout_forward(const BasicMatrix<T>& input, double rate, Rng& rng,
                               std::vector<T>& mask) {
  mask.assign(input.size(), T{1});
  if (rate <= 0.0) return input;
  BasicMatrix<T> out = input;
  const T keep_scale = rate >= 1.0 ? T{0} : static_cast<T>(1.0 / (1.0 - rate));
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    mask[i] = rng.bernoulli(rate) ? T{0} : keep_scale;
    d[i] *= mask[i];
  }
  return out;
}

template <typename T>
BasicMatrix<T> dropout_backward(const BasicMatrix<T>& grad_out, std::span<const T> mask) {
  BasicMatrix<T> grad = grad_out;
  auto g = grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
  return grad;
}

template <typename T>
struct BatchNormCache {
  BasicMatrix<T> normalized;     // x-hat
  std::vector<double> inv_std;   // per column
  bool training = true;
};

/// Training-mode batch normalization. Normalizes with the biased batch
/// variance and folds the unbiased variance into the running estimate.
template <typename T>
BasicMatrix<T> batchnorm_forward_train(const BasicMatrix<T>& input, std::span<const T> gamma,
                                       std::span<const T> beta, double epsilon, double momentum,
                                       std::span<T> running_mean, std::span<T> running_var,
                                       BatchNormCache<T>& cache) {
  const std::size_t n = input.rows();
  const std::size_t d = input.cols();
  if (n < 2) {
    throw InputError("batchnorm in training mode needs at least 2 rows, got " + std::to_string(n));
  }
  if (gamma.size() != d || beta.size() != d) {
    throw ConfigError("batchnorm: input " + input.shape() + " vs parameters of width " +
                      std::to_string(gamma.size()));
  }
  BasicMatrix<T> out(n, d);
  cache.normalized = BasicMatrix<T>(n, d);
  cache.inv_std.assign(d, 0.0);
  cache.training = true;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += input(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = input(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + epsilon);
    cache.inv_std[j] = inv_std;
    for (std::size_t i = 0; i < n; ++i) {
      const double xhat = (input(i, j) - mean) * inv_std;
      cache.normalized(i, j) = static_cast<T>(xhat);
      out(i, j) = static_cast<T>(gamma[j] * xhat + beta[j]);
    }
    const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
    running_mean[j] = static_cast<T>((1.0 - momentum) * running_mean[j] + momentum * mean);
    running_var[j] = static_cast<T>((1.0 - momentum) * running_var[j] + momentum * unbiased);
  }
  return out;
}

template <typename T>
BasicMatrix<T> batchnorm_forward_eval(const BasicMatrix<T>& input, std::span<const T> gamma,
                                      std::span<const T> beta, double epsilon,
                                      std::span<const T> running_mean,
                                      std::span<const T> running_var, BatchNormCache<T>& cache) {
  const std::size_t n = input.rows();
  const std::size_t d = input.cols();
  if (gamma.size() != d) {
    throw ConfigError("batchnorm: input " + input.shape() + " vs parameters of width " +
                      std::to_string(gamma.size()));
  }
  BasicMatrix<T> out(n, d);
  cache.normalized = BasicMatrix<T>(n, d);
  cache.inv_std.assign(d, 0.0);
  cache.training = false;
  for (std::size_t j = 0; j < d; ++j) {
    const double inv_std = 1.0 / std::sqrt(static_cast<double>(running_var[j]) + epsilon);
    cache.inv_std[j] = inv_std;
    for (std::size_t i = 0; i < n; ++i) {
      const double xhat = (input(i, j) - static_cast<double>(running_mean[j])) * inv_std;
      cache.normalized(i, j) = static_cast<T>(xhat);
      out(i, j) = static_cast<T>(gamma[j] * xhat + beta[j]);
    }
  }
  return out;
}

/// Accumulates dL/dgamma, dL/dbeta and returns dL/dinput.
template <typename T>
BasicMatrix<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma,
                                  const BasicMatrix<T>& grad_out, std::span<T> grad_gamma,
                                  std::span<T> grad_beta) {
  const std::size_t n = grad_out.rows();
  const std::size_t d = grad_out.cols();
  if (cache.normalized.rows() != n || cache.normalized.cols() != d) {
    throw UsageError("batchnorm_backward: cache does not match gradient " + grad_out.shape());
  }
  BasicMatrix<T> grad_in(n, d);
  for (std::size_t j = 0; j < d; ++j) {
    double sum_g = 0.0, sum_g_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_g += grad_out(i, j);
      sum_g_xhat += static_cast<double>(grad_out(i, j)) * cache.normalized(i, j);
    }
    grad_gamma[j] += static_cast<T>(sum_g_xhat);
    grad_beta[j] += static_cast<T>(sum_g);
    const double scale = gamma[j] * cache.inv_std[j];
    if (!cache.training) {
      for (std::size_t i = 0; i < n; ++i) grad_in(i, j) = static_cast<T>(grad_out(i, j) * scale);
      continue;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad_out(i, j);
      const double xhat = cache.normalized(i, j);
      grad_in(i, j) = static_cast<T>(scale * (g - inv_n * sum_g - xhat * inv_n * sum_g_xhat));
    }
  }
  return grad_in;
}

template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicMatrix<T> grad;  // dL/dlogits
};

/// Mean over the batch of w(y) * [log(1 + e^z) - y z], evaluated in the
/// overflow-free form max(z, 0) - y z + log1p(e^{-|z|}).
template <typename T>
LossResult<T> weighted_bce_with_logits(const BasicMatrix<T>& logits, std::span<const int> targets,
                                       std::span<const double> class_weights) {
  if (logits.cols() != 1 || logits.rows() != targets.size()) {
    throw ConfigError("weighted_bce_with_logits: logits " + logits.shape() + " vs " +
                      std::to_string(targets.size()) + " targets");
  }
  if (class_weights.size() != 2) throw ConfigError("weighted_bce_with_logits needs 2 class weights");
  const std::size_t n = targets.size();
  LossResult<T> r{0.0, BasicMatrix<T>(n, 1)};
  if (n == 0) return r;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = targets[i];
    if (y != 0 && y != 1) {
      throw InputError("weighted_bce_with_logits: target " + std::to_string(y) + " at row " +
                       std::to_string(i) + " is not binary");
    }
    const double z = logits(i, 0);
    const double w = class_weights[static_cast<std::size_t>(y)];
    total += w * (std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z))));
    const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    r.grad(i, 0) = static_cast<T>(w * (sig - y) / static_cast<double>(n));
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

/// Weighted mean of -log softmax(z)[y]; normalized by the sum of the weights
/// of the sampled targets.
template <typename T>
LossResult<T> weighted_cross_entropy(const BasicMatrix<T>& logits, std::span<const int> targets,
                                     std::span<const double> class_weights) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  if (c < 2) throw ConfigError("weighted_cross_entropy needs at least 2 classes");
  if (n != targets.size() || class_weights.size() != c) {
    throw ConfigError("weighted_cross_entropy: logits " + logits.shape() + " vs " +
                      std::to_string(targets.size()) + " targets and " +
                      std::to_string(class_weights.size()) + " class weights");
  }
  LossResult<T> r{0.0, BasicMatrix<T>(n, c)};
  if (n == 0) return r;
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = targets[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw InputError("weighted_cross_entropy: target " + std::to_string(y) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(c) + ")");
    }
    weight_sum += class_weights[static_cast<std::size_t>(y)];
  }
  if (weight_sum <= 0.0) throw InputError("weighted_cross_entropy: sampled class weights sum to zero");
  double total = 0.0;
  std::vector<double> prob(c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(targets[i]);
    auto z = logits.row(i);
    double zmax = z[0];
    for (std::size_t k = 1; k < c; ++k) zmax = std::max<double>(zmax, z[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      prob[k] = std::exp(z[k] - zmax);
      sum += prob[k];
    }
    const double w = class_weights[y] / weight_sum;
    total += w * (zmax + std::log(sum) - z[y]);
    for (std::size_t k = 0; k < c; ++k) {
      r.grad(i, k) = static_cast<T>(w * (prob[k] / sum - (k == y ? 1.0 : 0.0)));
    }
  }
  r.loss = total;
  return r;
}

}  // namespace gapfuse::ops
