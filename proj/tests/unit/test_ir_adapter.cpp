#include <gtest/gtest.h>

#include <fstream>

#include "cdupatch/errors.hpp"
#include "cdupatch/ir_adapter.hpp"
#include "cdupatch/thermal_model.hpp"
#include "test_support.hpp"

namespace cdupatch {
namespace {

using testing::rel_error;

PixelPairSet oracle_pairs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PixelPairSet s;
  for (int i = 0; i < n; ++i) {
    const Rgb c{u(rng), u(rng), u(rng)};
    s.inputs.push_back(c);
    s.targets.push_back(thermal_intensity(c[0], c[1], c[2], ThermalParams{}, ThermalCameraConfig{}));
  }
  return s;
}

TEST(AdapterModel, ParameterLayoutSize) {
  EXPECT_EQ(AdapterModel::parameter_count(), 3u * 64 + 64 + 64u * 64 + 64 + 64 + 1);
  EXPECT_THROW(AdapterModel::from_parameters(std::vector<double>(10)), ShapeError);
}

TEST(AdapterModel, OutputIsInUnitInterval) {
  const auto m = AdapterModel::initialized(3);
  for (double v : {0.0, 0.25, 0.5, 1.0}) {
    const double y = m.predict({v, 1.0 - v, v * v});
    EXPECT_GT(y, 0.0);
    EXPECT_LT(y, 1.0);
  }
}

TEST(AdapterModel, InputGradientMatchesFiniteDifferences) {
  const auto m = AdapterModel::initialized(11);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const double h = 1e-6;
  for (int point = 0; point < 20; ++point) {
    const Rgb x{u(rng), u(rng), u(rng)};
    Rgb g{};
    m.predict_with_gradient(x, g);
    for (int c = 0; c < 3; ++c) {
      Rgb a = x, b = x;
      a[c] += h;
      b[c] -= h;
      EXPECT_LT(rel_error(g[c], (m.predict(a) - m.predict(b)) / (2 * h)), 1e-4)
          << "point " << point << " channel " << c;
    }
  }
}

TEST(PredictIr, BackwardMatchesFiniteDifferences) {
  const auto m = AdapterModel::initialized(5);
  const Image rgb = testing::random_image(3, 4, 3, 17);
  const Image weights = testing::random_image(3, 4, 1, 18, -1.0, 1.0);
  const Image g = predict_ir_backward(m, rgb, weights);
  auto loss = [&](const Image& x) {
    const Image y = predict_ir(m, x);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * weights.data[i];
    return s;
  };
  const double h = 1e-6;
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    Image a = rgb, b = rgb;
    a.data[i] += h;
    b.data[i] -= h;
    EXPECT_LT(rel_error(g.data[i], (loss(a) - loss(b)) / (2 * h)), 1e-5) << "index " << i;
  }
}

TEST(PredictIr, ShapeChecks) {
  const auto m = AdapterModel::initialized(1);
  EXPECT_THROW(predict_ir(m, Image(2, 2, 1)), ShapeError);
  EXPECT_THROW(predict_ir_backward(m, Image(2, 2, 3), Image(2, 3, 1)), ShapeError);
}

TEST(TrainAdapter, FitsTheThermalOracle) {
  const auto train = oracle_pairs(10000, 1);
  const auto held = oracle_pairs(2000, 2);
  const auto r = train_adapter(train, AdapterTrainingConfig{});
  ASSERT_EQ(r.loss_history.size(), 200u);
  EXPECT_LT(r.loss_history.back(), r.loss_history.front());
  EXPECT_LT(adapter_mse(r.model, held), 1e-3);
  EXPECT_GT(r.model.predict({0, 0, 0}), r.model.predict({1, 1, 1}));
}

TEST(TrainAdapter, DeterministicUnderSeed) {
  const auto train = oracle_pairs(500, 4);
  AdapterTrainingConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  EXPECT_EQ(train_adapter(train, cfg).model.checksum(), train_adapter(train, cfg).model.checksum());
}

TEST(TrainAdapter, RejectsBadInputs) {
  EXPECT_THROW(train_adapter(PixelPairSet{}, AdapterTrainingConfig{}), ParameterError);
  AdapterTrainingConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train_adapter(oracle_pairs(10, 1), cfg), ParameterError);
}

TEST(SamplePixelPairs, DrawsAlignedPixels) {
  ImagePair p;
  p.visible = testing::random_image(5, 6, 3, 2);
  p.infrared = render_synthetic_ir(p.visible, ThermalParams{}, ThermalCameraConfig{});
  const std::vector<ImagePair> pairs{p};
  const auto s = sample_pixel_pairs(pairs, 200, 3);
  ASSERT_EQ(s.size(), 200u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& c = s.inputs[i];
    EXPECT_DOUBLE_EQ(s.targets[i], thermal_intensity(c[0], c[1], c[2], ThermalParams{}, ThermalCameraConfig{}));
  }
  EXPECT_THROW(sample_pixel_pairs(pairs, 0, 1), ParameterError);
}

TEST(AdapterFile, RoundTripIsExact) {
  testing::TempDir dir("adapter");
  const auto m = AdapterModel::initialized(21);
  save_adapter(m, dir / "a.cdua");
  const auto back = load_adapter(dir / "a.cdua");
  EXPECT_EQ(back.checksum(), m.checksum());
}

TEST(AdapterFile, RejectsCorruptFiles) {
  testing::TempDir dir("adapter_bad");
  EXPECT_THROW(load_adapter(dir / "missing.cdua"), IoError);
  {
    std::ofstream(dir / "junk.cdua") << "not an adapter";
  }
  EXPECT_THROW(load_adapter(dir / "junk.cdua"), FormatError);

  save_adapter(AdapterModel::initialized(1), dir / "a.cdua");
  // Patch the first hidden-layer size from 64 to 32.
  std::fstream f(dir / "a.cdua", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(4 + 4 + 4 + 4);
  const std::uint32_t wrong = 32;
  f.write(reinterpret_cast<const char*>(&wrong), 4);
  f.close();
  EXPECT_THROW(load_adapter(dir / "a.cdua"), FormatError);

  save_adapter(AdapterModel::initialized(1), dir / "b.cdua");
  std::filesystem::resize_file(dir / "b.cdua", 100);
  EXPECT_THROW(load_adapter(dir / "b.cdua"), FormatError);
}

}  // namespace
}  // namespace cdupatch
