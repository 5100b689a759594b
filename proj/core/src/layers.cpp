#include "gapfuse/layers.hpp"

#include <cmath>

#include "gapfuse/error.hpp"

namespace gapfuse {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::dropout: return "dropout";
    case LayerKind::batchnorm: return "batchnorm";
  }
  return "unknown";
}

void LayerSpec::validate() const {
  const std::string what(to_string(kind));
  if (in_dim == 0) throw ConfigError(what + " layer needs in_dim >= 1");
  if (kind == LayerKind::dense) {
    if (out_dim == 0) throw ConfigError("dense layer needs out_dim >= 1");
    return;
  }
  if (in_dim != out_dim) {
    throw ConfigError(what + " layer must preserve dimension, got " + std::to_string(in_dim) +
                      " -> " + std::to_string(out_dim));
  }
  if (kind == LayerKind::dropout && !(dropout_rate >= 0.0 && dropout_rate <= 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1]");
  }
  if (kind == LayerKind::batchnorm &&
      (!(bn_epsilon > 0.0) || !(bn_momentum >= 0.0 && bn_momentum <= 1.0))) {
    throw ConfigError("batchnorm needs epsilon > 0 and momentum in [0, 1]");
  }
}

std::size_t LayerSpec::parameter_count() const {
  switch (kind) {
    case LayerKind::dense: return in_dim * out_dim + out_dim;
    case LayerKind::batchnorm: return 2 * out_dim;
    default: return 0;
  }
}

std::vector<LayerSpec> feature_block(std::size_t in_dim, std::size_t width, double dropout_rate,
                                     double bn_epsilon, double bn_momentum) {
  return {LayerSpec::dense(in_dim, width), LayerSpec::relu(width),
          LayerSpec::dropout(width, dropout_rate),
          LayerSpec::batchnorm(width, bn_epsilon, bn_momentum)};
}

LayerStack::LayerStack(std::string name, std::vector<LayerSpec> specs, ParameterStore& params,
                       ParameterStore& buffers, Rng& init_rng)
    : name_(std::move(name)), specs_(std::move(specs)) {
  if (specs_.empty()) throw ConfigError("layer stack '" + name_ + "' is empty");
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    s.validate();
    if (i > 0 && specs_[i - 1].out_dim != s.in_dim) {
      throw ConfigError("layer stack '" + name_ + "': layer " + std::to_string(i) + " expects " +
                        std::to_string(s.in_dim) + " inputs but previous layer produces " +
                        std::to_string(specs_[i - 1].out_dim));
    }
    const std::string prefix = name_ + "." + std::to_string(i) + ".";
    Slot slot;
    if (s.kind == LayerKind::dense) {
      slot.first = params.add(prefix + "weight", s.out_dim, s.in_dim);
      slot.second = params.add(prefix + "bias", 1, s.out_dim);
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.in_dim));
      for (float& w : params.values(slot.first)) w = static_cast<float>(init_rng.uniform(-bound, bound));
      for (float& b : params.values(slot.second)) b = static_cast<float>(init_rng.uniform(-bound, bound));
    } else if (s.kind == LayerKind::batchnorm) {
      slot.first = params.add(prefix + "gamma", 1, s.out_dim, 1.0f);
      slot.second = params.add(prefix + "beta", 1, s.out_dim, 0.0f);
      slot.running_mean = buffers.add(prefix + "running_mean", 1, s.out_dim, 0.0f);
      slot.running_var = buffers.add(prefix + "running_var", 1, s.out_dim, 1.0f);
    }
    slots_.push_back(slot);
  }
}

Matrix LayerStack::forward(const Matrix& input, Phase phase, const ParameterStore& params,
                           ParameterStore& buffers, Rng& dropout_rng) {
  if (input.cols() != input_dim()) {
    throw ConfigError("layer stack '" + name_ + "' expects " + std::to_string(input_dim()) +
                      " input columns, got " + input.shape());
  }
  tape_ = Tape{};
  tape_.inputs.reserve(specs_.size());
  tape_.masks.resize(specs_.size());
  tape_.bn.resize(specs_.size());
  Matrix x = input;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    const auto& slot = slots_[i];
    tape_.inputs.push_back(x);
    switch (s.kind) {
      case LayerKind::dense:
        x = ops::dense_forward<float>(x, params.values(slot.first), params.values(slot.second));
        break;
      case LayerKind::relu:
        x = ops::relu(x);
        break;
      case LayerKind::dropout:
        if (phase == Phase::train) {
          x = ops::dropout_forward(x, s.dropout_rate, dropout_rng, tape_.masks[i]);
        } else {
          tape_.masks[i].assign(x.size(), 1.0f);
        }
        break;
      case LayerKind::batchnorm:
        if (phase == Phase::train) {
          x = ops::batchnorm_forward_train<float>(
              x, params.values(slot.first), params.values(slot.second), s.bn_epsilon,
              s.bn_momentum, buffers.values(slot.running_mean), buffers.values(slot.running_var),
              tape_.bn[i]);
        } else {
          const ParameterStore& ro = buffers;
          x = ops::batchnorm_forward_eval<float>(x, params.values(slot.first),
                                                 params.values(slot.second), s.bn_epsilon,
                                                 ro.values(slot.running_mean),
                                                 ro.values(slot.running_var), tape_.bn[i]);
        }
        break;
    }
  }
  tape_.valid = true;
  return x;
}

Matrix LayerStack::backward(const Matrix& grad_output, ParameterStore& params) {
  if (!tape_.valid) {
    throw UsageError("layer stack '" + name_ + "': backward called without a preceding forward");
  }
  Matrix g = grad_output;
  for (std::size_t i = specs_.size(); i-- > 0;) {
    const auto& s = specs_[i];
    const auto& slot = slots_[i];
    const Matrix& in = tape_.inputs[i];
    switch (s.kind) {
      case LayerKind::dense: {
        const ParameterStore& ro = params;
        g = ops::dense_backward<float>(in, ro.values(slot.first), g, params.grads(slot.first),
                                       params.grads(slot.second));
        break;
      }
      case LayerKind::relu:
        g = ops::relu_backward(in, g);
        break;
      case LayerKind::dropout:
        g = ops::dropout_backward<float>(g, tape_.masks[i]);
        break;
      case LayerKind::batchnorm: {
        const ParameterStore& ro = params;
        g = ops::batchnorm_backward<float>(tape_.bn[i], ro.values(slot.first), g,
                                           params.grads(slot.first), params.grads(slot.second));
        break;
      }
    }
  }
  tape_.valid = false;
  return g;
}

}  // namespace gapfuse
