#include <gtest/gtest.h>

#include <vector>

#include "cdupatch/nn.hpp"
#include "test_support.hpp"

namespace cdupatch::nn {
namespace {

FeatureMap random_map(int c, int h, int w, std::uint64_t seed) {
  return to_feature_map(cdupatch::testing::random_image(h, w, c, seed, -1.0, 1.0));
}

// Direct nested-loop convolution used as the reference.
FeatureMap naive_conv(const ConvSpec& s, std::span<const double> p, std::size_t off,
                      const FeatureMap& in) {
  FeatureMap out;
  out.channels = s.out_channels;
  out.height = s.out_size(in.height);
  out.width = s.out_size(in.width);
  out.values = RowMatrix::Zero(out.channels, out.height * out.width);
  const std::size_t bias = off + s.weight_count();
  for (int o = 0; o < s.out_channels; ++o)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        double acc = p[bias + o];
        for (int i = 0; i < s.in_channels; ++i)
          for (int ky = 0; ky < s.kernel; ++ky)
            for (int kx = 0; kx < s.kernel; ++kx) {
              const int iy = y * s.stride - s.padding + ky * s.dilation;
              const int ix = x * s.stride - s.padding + kx * s.dilation;
              if (iy < 0 || ix < 0 || iy >= in.height || ix >= in.width) continue;
              const std::size_t wi = off + ((std::size_t(o) * s.in_channels + i) * s.kernel + ky) * s.kernel + kx;
              acc += p[wi] * in.values(i, iy * in.width + ix);
            }
        out.values(o, y * out.width + x) = acc;
      }
  return out;
}

class ConvCase : public ::testing::TestWithParam<ConvSpec> {};

TEST_P(ConvCase, ForwardMatchesNaiveLoops) {
  const ConvSpec s = GetParam();
  const std::size_t off = 5;
  std::vector<double> params(off + s.param_count());
  std::mt19937_64 rng(1);
  Conv2d conv(s, off);
  conv.init(params, rng);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (std::size_t i = off + s.weight_count(); i < params.size(); ++i) params[i] = u(rng);

  const FeatureMap in = random_map(s.in_channels, 11, 9, 2);
  RowMatrix cols;
  const FeatureMap got = conv.forward(params, in, cols);
  const FeatureMap want = naive_conv(s, params, off, in);
  ASSERT_EQ(got.height, want.height);
  ASSERT_EQ(got.width, want.width);
  EXPECT_LT((got.values - want.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_P(ConvCase, BackwardMatchesFiniteDifferences) {
  const ConvSpec s = GetParam();
  std::vector<double> params(s.param_count());
  std::mt19937_64 rng(3);
  Conv2d conv(s, 0);
  conv.init(params, rng);
  FeatureMap in = random_map(s.in_channels, 10, 8, 4);
  RowMatrix cols;
  const FeatureMap out = conv.forward(params, in, cols);
  const RowMatrix weights = random_map(out.channels, out.height, out.width, 5).values;

  auto loss = [&](std::span<const double> p, const FeatureMap& x) {
    RowMatrix c;
    return conv.forward(p, x, c).values.cwiseProduct(weights).sum();
  };
  std::vector<double> gp(params.size(), 0.0);
  FeatureMap gin;
  conv.backward(params, in, cols, weights, gp, &gin);

  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); i += 3) {
    auto a = params, b = params;
    a[i] += h;
    b[i] -= h;
    EXPECT_LT(cdupatch::testing::rel_error(gp[i], (loss(a, in) - loss(b, in)) / (2 * h), 1e-6), 1e-6)
        << "param " << i;
  }
  for (Eigen::Index i = 0; i < in.values.size(); i += 7) {
    FeatureMap a = in, b = in;
    a.values.data()[i] += h;
    b.values.data()[i] -= h;
    EXPECT_LT(cdupatch::testing::rel_error(gin.values.data()[i],
                                          (loss(params, a) - loss(params, b)) / (2 * h), 1e-6),
              1e-6)
        << "input " << i;
  }
}

INSTANTIATE_TEST_SUITE_P(Specs, ConvCase,
                         ::testing::Values(ConvSpec{2, 3, 3, 1, 1, 1}, ConvSpec{3, 4, 3, 2, 1, 1},
                                           ConvSpec{2, 2, 3, 1, 2, 2}, ConvSpec{3, 5, 1, 1, 0, 1}));

TEST(LeakyRelu, ForwardAndBackward) {
  RowMatrix pre(1, 4);
  pre << -2.0, -0.5, 0.5, 3.0;
  RowMatrix post;
  leaky_relu(pre, post, 0.1);
  EXPECT_DOUBLE_EQ(post(0, 0), -0.2);
  EXPECT_DOUBLE_EQ(post(0, 3), 3.0);
  RowMatrix g = RowMatrix::Ones(1, 4);
  leaky_relu_backward(pre, g, 0.1);
  EXPECT_DOUBLE_EQ(g(0, 1), 0.1);
  EXPECT_DOUBLE_EQ(g(0, 2), 1.0);
}

TEST(FeatureMap, RoundTripsImages) {
  const Image img = cdupatch::testing::random_image(4, 5, 3, 6);
  const Image back = to_image(to_feature_map(img));
  EXPECT_EQ(back.data, img.data);
}

}  // namespace
}  // namespace cdupatch::nn
