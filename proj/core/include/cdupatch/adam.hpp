#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cdupatch {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over a flat parameter vector. State is sized once at construction.
class Adam {
 public:
  Adam(std::size_t n_params, AdamOptions options);

  void step(std::span<double> params, std::span<const double> grads);
  void set_learning_rate(double lr) noexcept { options_.learning_rate = lr; }
  double learning_rate() const noexcept { return options_.learning_rate; }
  long long steps() const noexcept { return t_; }

 private:
  AdamOptions options_;
  std::vector<double> m_;
  std::vector<double> v_;
  long long t_ = 0;
};

/// Plain gradient descent, kept for the optimizer-kind switch of the patch trainer.
class Sgd {
 public:
  explicit Sgd(double learning_rate, double momentum = 0.0) : lr_(learning_rate), momentum_(momentum) {}
  void step(std::span<double> params, std::span<const double> grads);

 private:
  double lr_;
  double momentum_;
  std::vector<double> velocity_;
};

}  // namespace cdupatch
