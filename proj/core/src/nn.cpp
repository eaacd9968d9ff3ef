#include "cdupatch/nn.hpp"

#include <cmath>

#include "cdupatch/errors.hpp"

namespace cdupatch::nn {

FeatureMap to_feature_map(const Image& img) {
  FeatureMap fm{img.channels, img.height, img.width, RowMatrix(img.channels, std::size_t(img.height) * img.width)};
  const std::size_t hw = std::size_t(img.height) * img.width;
  for (std::size_t p = 0; p < hw; ++p)
    for (int c = 0; c < img.channels; ++c) fm.values(c, p) = img.data[p * img.channels + c];
  return fm;
}

Image to_image(const FeatureMap& fm) {
  Image img(fm.height, fm.width, fm.channels);
  const std::size_t hw = std::size_t(fm.height) * fm.width;
  for (std::size_t p = 0; p < hw; ++p)
    for (int c = 0; c < fm.channels; ++c) img.data[p * fm.channels + c] = fm.values(c, p);
  return img;
}

void Conv2d::init(std::span<double> params, std::mt19937_64& rng) const {
  const double fan_in = double(spec_.in_channels) * spec_.kernel * spec_.kernel;
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < spec_.weight_count(); ++i) params[offset_ + i] = dist(rng);
  for (int o = 0; o < spec_.out_channels; ++o) params[offset_ + spec_.weight_count() + o] = 0.0;
}

namespace {

// cols is (in*k*k) x (Ho*Wo).
void im2col(const ConvSpec& s, const FeatureMap& in, int ho, int wo, RowMatrix& cols) {
  const int k = s.kernel;
  cols.setZero(std::size_t(s.in_channels) * k * k, std::size_t(ho) * wo);
  for (int c = 0; c < s.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const std::size_t row = (std::size_t(c) * k + ky) * k + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s.stride - s.padding + ky * s.dilation;
          if (iy < 0 || iy >= in.height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s.stride - s.padding + kx * s.dilation;
            if (ix < 0 || ix >= in.width) continue;
            cols(row, std::size_t(oy) * wo + ox) = in.values(c, std::size_t(iy) * in.width + ix);
          }
        }
      }
    }
  }
}

void col2im(const ConvSpec& s, const RowMatrix& dcols, int ho, int wo, FeatureMap& out) {
  const int k = s.kernel;
  out.values.setZero();
  for (int c = 0; c < s.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const std::size_t row = (std::size_t(c) * k + ky) * k + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s.stride - s.padding + ky * s.dilation;
          if (iy < 0 || iy >= out.height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s.stride - s.padding + kx * s.dilation;
            if (ix < 0 || ix >= out.width) continue;
            out.values(c, std::size_t(iy) * out.width + ix) += dcols(row, std::size_t(oy) * wo + ox);
          }
        }
      }
    }
  }
}

}  // namespace

FeatureMap Conv2d::forward(std::span<const double> params, const FeatureMap& in, RowMatrix& cols) const {
  if (in.channels != spec_.in_channels) throw ShapeError("conv input channel mismatch");
  const int ho = spec_.out_size(in.height), wo = spec_.out_size(in.width);
  if (ho < 1 || wo < 1) throw ShapeError("conv input too small");
  im2col(spec_, in, ho, wo, cols);
  const auto kk = static_cast<Eigen::Index>(spec_.in_channels * spec_.kernel * spec_.kernel);
  Eigen::Map<const RowMatrix> w(params.data() + offset_, spec_.out_channels, kk);
  Eigen::Map<const Eigen::VectorXd> b(params.data() + offset_ + spec_.weight_count(), spec_.out_channels);
  FeatureMap out{spec_.out_channels, ho, wo, RowMatrix()};
  out.values.noalias() = w * cols;
  out.values.colwise() += b;
  return out;
}

void Conv2d::backward(std::span<const double> params, const FeatureMap& in, const RowMatrix& cols,
                      const RowMatrix& grad_out, std::span<double> grad_params, FeatureMap* grad_in) const {
  const int ho = spec_.out_size(in.height), wo = spec_.out_size(in.width);
  const auto kk = static_cast<Eigen::Index>(spec_.in_channels * spec_.kernel * spec_.kernel);
  if (grad_out.rows() != spec_.out_channels || grad_out.cols() != Eigen::Index(ho) * wo) {
    throw ShapeError("conv gradient shape mismatch");
  }
  if (!grad_params.empty()) {
    Eigen::Map<RowMatrix> gw(grad_params.data() + offset_, spec_.out_channels, kk);
    Eigen::Map<Eigen::VectorXd> gb(grad_params.data() + offset_ + spec_.weight_count(), spec_.out_channels);
    gw.noalias() += grad_out * cols.transpose();
    gb += grad_out.rowwise().sum();
  }
  if (grad_in) {
    Eigen::Map<const RowMatrix> w(params.data() + offset_, spec_.out_channels, kk);
    RowMatrix dcols = w.transpose() * grad_out;
    grad_in->channels = in.channels;
    grad_in->height = in.height;
    grad_in->width = in.width;
    grad_in->values.resize(in.channels, Eigen::Index(in.height) * in.width);
    col2im(spec_, dcols, ho, wo, *grad_in);
  }
}

void leaky_relu(const RowMatrix& pre, RowMatrix& post, double slope) {
  post = pre.unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
}

void leaky_relu_backward(const RowMatrix& pre, RowMatrix& grad, double slope) {
  grad.array() *= pre.unaryExpr([slope](double v) { return v > 0 ? 1.0 : slope; }).array();
}

}  // namespace cdupatch::nn
