#include "cdupatch/adam.hpp"

#include <cmath>

#include "cdupatch/errors.hpp"

namespace cdupatch {

Adam::Adam(std::size_t n_params, AdamOptions options)
    : options_(options), m_(n_params, 0.0), v_(n_params, 0.0) {
  if (!(options.learning_rate > 0)) throw ParameterError("learning rate must be positive");
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw ShapeError("Adam: parameter/gradient size mismatch");
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double step = options_.learning_rate * std::sqrt(c2) / c1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1 - b1) * grads[i];
    v_[i] = b2 * v_[i] + (1 - b2) * grads[i] * grads[i];
    params[i] -= step * m_[i] / (std::sqrt(v_[i]) + options_.epsilon * std::sqrt(c2));
  }
}

void Sgd::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw ShapeError("SGD: parameter/gradient size mismatch");
  if (velocity_.size() != params.size()) velocity_.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity_[i] = momentum_ * velocity_[i] + grads[i];
    params[i] -= lr_ * velocity_[i];
  }
}

}  // namespace cdupatch
