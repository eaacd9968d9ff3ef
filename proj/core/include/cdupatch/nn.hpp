#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>

#include <Eigen/Core>

#include "cdupatch/image.hpp"

namespace cdupatch::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Channel-major activations: `values` is channels x (height * width).
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  RowMatrix values;
};

FeatureMap to_feature_map(const Image& img);
Image to_image(const FeatureMap& fm);

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  int dilation = 1;

  int out_size(int n) const noexcept {
    return (n + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
  }
  std::size_t weight_count() const noexcept {
    return std::size_t(out_channels) * in_channels * kernel * kernel;
  }
  std::size_t param_count() const noexcept { return weight_count() + out_channels; }
};

/// 2-D convolution by im2col + GEMM. Parameters live in a caller-owned flat buffer starting
/// at `offset`: weights (out x in*k*k, row-major) then biases.
class Conv2d {
 public:
  Conv2d(ConvSpec spec, std::size_t offset) : spec_(spec), offset_(offset) {}

  const ConvSpec& spec() const noexcept { return spec_; }
  std::size_t offset() const noexcept { return offset_; }

  /// He-uniform weights, zero bias.
  void init(std::span<double> params, std::mt19937_64& rng) const;

  /// `cols` receives the im2col matrix needed by backward().
  FeatureMap forward(std::span<const double> params, const FeatureMap& in, RowMatrix& cols) const;

  /// grad_out is out_channels x (Ho * Wo). grad_params may be empty (input gradient only);
  /// grad_in may be null (parameter gradient only).
  void backward(std::span<const double> params, const FeatureMap& in, const RowMatrix& cols,
                const RowMatrix& grad_out, std::span<double> grad_params,
                FeatureMap* grad_in) const;

 private:
  ConvSpec spec_;
  std::size_t offset_;
};

void leaky_relu(const RowMatrix& pre, RowMatrix& post, double slope);
/// grad *= f'(pre), in place.
void leaky_relu_backward(const RowMatrix& pre, RowMatrix& grad, double slope);

inline double sigmoid(double x) noexcept {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace cdupatch::nn
