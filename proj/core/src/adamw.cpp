#include "gapfuse/adamw.hpp"

#include <cmath>
#include <string>

#include "gapfuse/error.hpp"

namespace gapfuse {

AdamW::AdamW(std::size_t parameter_count, Options options)
    : options_(options), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {
  if (!(options_.lr > 0.0) || !(options_.beta1 > 0.0 && options_.beta1 < 1.0) ||
      !(options_.beta2 > 0.0 && options_.beta2 < 1.0) || !(options_.epsilon > 0.0) ||
      options_.weight_decay < 0.0) {
    throw ConfigError("AdamW: invalid hyperparameters");
  }
}

void AdamW::step(std::span<float> params, std::span<const float> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ConfigError("AdamW::step: expected " + std::to_string(m_.size()) + " parameters, got " +
                      std::to_string(params.size()) + " params / " + std::to_string(grads.size()) +
                      " grads");
  }
  ++step_;
  const auto& o = options_;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
  const double decay = 1.0 - o.lr * o.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double p = static_cast<double>(params[i]) * decay;
    m_[i] = o.beta1 * m_[i] + (1.0 - o.beta1) * g;
    v_[i] = o.beta2 * v_[i] + (1.0 - o.beta2) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    p -= o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
    params[i] = static_cast<float>(p);
  }
}

void AdamW::reset() {
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
  step_ = 0;
}

}  // namespace gapfuse
