#include <gtest/gtest.h>

#include "cdupatch/compositor.hpp"
#include "cdupatch/errors.hpp"
#include "test_support.hpp"

namespace cdupatch {
namespace {

using testing::random_image;
using testing::rel_error;

Placement fixed_placement(int side, int left, int top) {
  Placement p;
  p.target_bbox = Box{double(left), double(top), double(left + side), double(top + side)};
  p.patch_side = side;
  p.left = left;
  p.top = top;
  return p;
}

TEST(Placement, TopCentreWithCoverageCap) {
  const auto a = placement_from_bbox(Box{10, 20, 110, 120});
  EXPECT_EQ(a.patch_side, 54);
  EXPECT_EQ(a.left, 33);
  EXPECT_EQ(a.top, 20);

  // Elongated box: the side is capped by the short dimension.
  const auto b = placement_from_bbox(Box{0, 0, 200, 50});
  EXPECT_EQ(b.patch_side, 50);
  EXPECT_EQ(b.left, 75);
  EXPECT_EQ(b.top, 0);

  const auto c = placement_from_bbox(Box{3.2, 4.7, 40.9, 30.1});
  EXPECT_EQ(c.patch_side, 16);
  EXPECT_EQ(c.left, 14);
  EXPECT_EQ(c.top, 5);
}

TEST(Placement, CoverageNeverExceedsCap) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(0, 100), len(2, 150), cap(0.05, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double x = pos(rng), y = pos(rng);
    const Box b{x, y, x + len(rng), y + len(rng)};
    const double k = cap(rng);
    const auto p = placement_from_bbox(b, k);
    EXPECT_LE(double(p.patch_side) * p.patch_side, k * b.area() + 1e-9);
    EXPECT_LE(p.patch_side, b.width());
    EXPECT_LE(p.patch_side, b.height());
  }
}

TEST(Placement, Errors) {
  EXPECT_THROW(placement_from_bbox(Box{10, 10, 20, 20}, 0.0), ParameterError);
  EXPECT_THROW(placement_from_bbox(Box{10, 10, 10, 20}), ParameterError);
  EXPECT_THROW(placement_from_bbox(Box{0, 0, 1.5, 1.5}, 0.1), ParameterError);
}

TEST(SampleTransform, IdentityConfigGivesIdentity) {
  const auto t = sample_transform(EotConfig::identity(), 1, 2);
  EXPECT_DOUBLE_EQ(t.rotation_deg, 0.0);
  EXPECT_DOUBLE_EQ(t.scale, 1.0);
  EXPECT_DOUBLE_EQ(t.brightness_delta, 0.0);
  EXPECT_DOUBLE_EQ(t.blur_sigma, 0.0);
}

TEST(SampleTransform, DeterministicAndInRange) {
  const EotConfig cfg;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto a = sample_transform(cfg, 7, i);
    const auto b = sample_transform(cfg, 7, i);
    EXPECT_EQ(a.rotation_deg, b.rotation_deg);
    EXPECT_EQ(a.blur_sigma, b.blur_sigma);
    EXPECT_GE(a.rotation_deg, cfg.rotation_deg.lo);
    EXPECT_LE(a.rotation_deg, cfg.rotation_deg.hi);
    EXPECT_GE(a.scale, cfg.scale.lo);
    EXPECT_LE(a.scale, cfg.scale.hi);
    EXPECT_GE(a.brightness_delta, cfg.brightness.lo);
    EXPECT_LE(a.brightness_delta, cfg.brightness.hi);
    const auto ir = resample_photometric(a, cfg, 7, i);
    EXPECT_EQ(ir.rotation_deg, a.rotation_deg);
    EXPECT_EQ(ir.scale, a.scale);
  }
  EXPECT_NE(sample_transform(cfg, 7, 0).rotation_deg, sample_transform(cfg, 8, 0).rotation_deg);
}

TEST(SampleTransform, RejectsInvertedRanges) {
  EotConfig cfg;
  cfg.scale = {1.2, 0.8};
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = EotConfig{};
  cfg.scale = {0.0, 1.0};
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(PatchWarp, MatchesBilinearOracle) {
  Image patch(4, 4, 1);
  for (int i = 0; i < 16; ++i) patch.data[i] = i / 20.0;
  TransformSample t;
  t.rotation_deg = 30.0;
  t.scale = 1.1;
  t.brightness_delta = 0.05;
  const auto r = warp_patch(patch, fixed_placement(8, 5, 6), t, 24, 24);
  EXPECT_EQ(r.mask.count(), 76u);
  const struct {
    int v, u;
    double value;
  } expected[] = {{10, 9, 0.491251443396843}, {8, 12, 0.540996535847577},
                  {12, 10, 0.691120275989115}, {14, 8, 0.664022438593359},
                  {7, 9, 0.289153606001087}};
  for (const auto& e : expected) {
    ASSERT_EQ(r.mask.at(e.v, e.u), 1);
    EXPECT_NEAR(r.canvas.at(e.v, e.u), e.value, 1e-12) << e.v << "," << e.u;
  }
}

TEST(PatchWarp, IdentityAtNativeSizeCopiesPatch) {
  const Image patch = random_image(6, 6, 3, 4);
  const auto r = warp_patch(patch, fixed_placement(6, 3, 2), TransformSample::identity(), 12, 12);
  EXPECT_EQ(r.mask.count(), 36u);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(r.canvas.at(y + 2, x + 3, c), patch.at(y, x, c));
}

TEST(PatchWarp, ClipsAtCanvasEdgeAndFailsWhenOutside) {
  const Image patch = random_image(4, 4, 3, 5);
  const auto r = warp_patch(patch, fixed_placement(8, -4, 0), TransformSample::identity(), 10, 10);
  EXPECT_EQ(r.mask.count(), 32u);
  EXPECT_THROW(warp_patch(patch, fixed_placement(8, 20, 20), TransformSample::identity(), 10, 10),
               ParameterError);
}

TEST(Composite, MaskZeroLeavesImageUnchanged) {
  const Image img = random_image(8, 9, 3, 6);
  const Image canvas = random_image(8, 9, 3, 7);
  const Mask empty(8, 9, 0);
  EXPECT_EQ(composite(img, canvas, empty).data, img.data);
  const Mask full(8, 9, 1);
  EXPECT_EQ(composite(img, canvas, full).data, canvas.data);
  EXPECT_THROW(composite(img, Image(8, 9, 1), full), ShapeError);
}

// Gradient of sum(w * composite(image, warp(patch))) with respect to the patch.
void check_patch_gradient(const TransformSample& t, std::uint64_t seed) {
  const int S = 8, H = 20, W = 22;
  const Image patch = random_image(S, S, 3, seed, 0.1, 0.9);
  const Image img = random_image(H, W, 3, seed + 1);
  const Image weights = random_image(H, W, 3, seed + 2, -1.0, 1.0);
  const Placement pl = fixed_placement(10, 6, 4);

  auto loss = [&](const Image& p) {
    PatchWarp warp(S, 3, pl, t, H, W);
    const Image out = composite(img, warp.forward(p), warp.mask());
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data[i] * weights.data[i];
    return s;
  };
  PatchWarp warp(S, 3, pl, t, H, W);
  warp.forward(patch);
  const auto cg = composite_backward(weights, warp.mask());
  const Image grad = warp.backward(cg.patch_canvas);
  ASSERT_TRUE(grad.same_shape(patch));

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, patch.size() - 1);
  const double h = 1e-6;
  for (int k = 0; k < 20; ++k) {
    const std::size_t i = pick(rng);
    Image a = patch, b = patch;
    a.data[i] += h;
    b.data[i] -= h;
    const double fd = (loss(a) - loss(b)) / (2 * h);
    EXPECT_LT(rel_error(grad.data[i], fd, 1e-6), 1e-4) << "index " << i;
  }
}

TEST(PatchWarpBackward, IdentityMatchesFiniteDifferences) {
  check_patch_gradient(TransformSample::identity(), 10);
}

TEST(PatchWarpBackward, RotationScaleBrightnessMatchesFiniteDifferences) {
  TransformSample t;
  t.rotation_deg = -17.0;
  t.scale = 0.9;
  t.brightness_delta = 0.08;
  check_patch_gradient(t, 20);
}

TEST(PatchWarpBackward, BlurMatchesFiniteDifferences) {
  TransformSample t;
  t.rotation_deg = 12.0;
  t.scale = 1.15;
  t.brightness_delta = -0.05;
  t.blur_sigma = 1.2;
  check_patch_gradient(t, 30);
}

TEST(PatchWarpBackward, ClampedPixelsCarryNoGradient) {
  Image patch(4, 4, 1, 0.99);
  TransformSample t;
  t.brightness_delta = 0.1;
  PatchWarp warp(4, 1, fixed_placement(4, 0, 0), t, 4, 4);
  const Image out = warp.forward(patch);
  for (double v : out.data) EXPECT_EQ(v, 1.0);
  const Image g = warp.backward(Image(4, 4, 1, 1.0));
  for (double v : g.data) EXPECT_EQ(v, 0.0);
}

TEST(CompositeBackward, SplitsGradientByMask) {
  Mask m(2, 2, 0);
  m.at(0, 1) = 1;
  const Image g(2, 2, 3, 2.0);
  const auto r = composite_backward(g, m);
  EXPECT_EQ(r.image.at(0, 0, 0), 2.0);
  EXPECT_EQ(r.image.at(0, 1, 2), 0.0);
  EXPECT_EQ(r.patch_canvas.at(0, 1, 1), 2.0);
  EXPECT_EQ(r.patch_canvas.at(1, 1, 0), 0.0);
}

}  // namespace
}  // namespace cdupatch
