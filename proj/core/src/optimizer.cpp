#include "rml/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace rml {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("AdamConfig: learning_rate must be > 0");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("AdamConfig: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("AdamConfig: epsilon must be > 0");
  }
}

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params,
                             AdamConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  state_.slots.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].second.requires_grad()) {
      throw std::invalid_argument("AdamOptimizer: parameter '" + params_[i].first +
                                  "' does not track gradients");
    }
    state_.slots[i].m.assign(params_[i].second.size(), 0.0);
    state_.slots[i].v.assign(params_[i].second.size(), 0.0);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

void AdamOptimizer::step() {
  const std::size_t t = ++state_.step_count;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    auto values = p.values();
    auto grads = p.grad();
    AdamState::Slot& slot = state_.slots[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[j];
      if (!std::isfinite(g)) {
        throw std::runtime_error("AdamOptimizer: non-finite gradient in '" +
                                 params_[i].first + "' at step " + std::to_string(t));
      }
      slot.m[j] = config_.beta1 * slot.m[j] + (1.0 - config_.beta1) * g;
      slot.v[j] = config_.beta2 * slot.v[j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = slot.m[j] / bias1;
      const double v_hat = slot.v[j] / bias2;
      values[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace rml
