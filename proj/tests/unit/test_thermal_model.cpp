#include <gtest/gtest.h>

#include <cmath>

#include "cdupatch/errors.hpp"
#include "cdupatch/thermal_model.hpp"

namespace cdupatch {
namespace {

// Reference values evaluated independently in double precision.
constexpr double kT090 = 396.867034143330;
constexpr double kT020 = 329.676256783081;
constexpr double kT050 = 363.098132323219;

ThermalParams with_alpha(double a) {
  ThermalParams p;
  p.absorptivity = a;
  return p;
}

TEST(SurfaceTemperature, MatchesReferenceValues) {
  EXPECT_NEAR(surface_temperature(with_alpha(0.9)), kT090, kT090 * 1e-9);
  EXPECT_NEAR(surface_temperature(with_alpha(0.2)), kT020, kT020 * 1e-9);
  EXPECT_NEAR(surface_temperature(with_alpha(0.5)), kT050, kT050 * 1e-9);
}

TEST(SurfaceTemperature, ZeroAbsorptivityIsAmbientExactly) {
  ThermalParams p = with_alpha(0.0);
  p.ambient = 287.25;
  EXPECT_EQ(surface_temperature(p), 287.25);
}

TEST(SurfaceTemperature, IncreasesWithAbsorptivity) {
  double prev = 0.0;
  for (int i = 0; i <= 20; ++i) {
    const double t = surface_temperature(with_alpha(i / 20.0));
    EXPECT_GT(t, prev);
    prev = t;
  }
}

TEST(SurfaceTemperature, RejectsOutOfDomainInputs) {
  EXPECT_THROW(surface_temperature(with_alpha(1.2)), ParameterError);
  EXPECT_THROW(surface_temperature(with_alpha(-0.1)), ParameterError);
  ThermalParams p = with_alpha(0.5);
  p.emissivity = 0.0;
  EXPECT_THROW(surface_temperature(p), ParameterError);
  p = with_alpha(0.5);
  p.ambient = 0.0;
  EXPECT_THROW(surface_temperature(p), ParameterError);
  p = with_alpha(0.5);
  p.irradiance = -1.0;
  EXPECT_THROW(surface_temperature(p), ParameterError);
}

TEST(ColorToAbsorptivity, AffineModel) {
  EXPECT_DOUBLE_EQ(color_to_absorptivity(0, 0, 0), 0.9);
  EXPECT_DOUBLE_EQ(color_to_absorptivity(1, 1, 1), 0.2);
  EXPECT_DOUBLE_EQ(color_to_absorptivity(1, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(color_to_absorptivity(0, 0, 1), 0.75);
  EXPECT_THROW(color_to_absorptivity(1.01, 0, 0), ParameterError);
  EXPECT_THROW(color_to_absorptivity(0, -0.01, 0), ParameterError);
}

TEST(ThermalIntensity, CameraRampReference) {
  const ThermalParams scene;
  const ThermalCameraConfig cam;
  EXPECT_NEAR(thermal_intensity(0, 0, 0, scene, cam), 0.971518492212, 1e-11);
  EXPECT_NEAR(thermal_intensity(1, 1, 1, scene, cam), 0.360693243483, 1e-11);
  EXPECT_NEAR(thermal_intensity(1, 0, 0, scene, cam), 0.664528475666, 1e-11);
  EXPECT_NEAR(thermal_intensity(0.5, 0.5, 0.5, scene, cam), 0.707739204063, 1e-11);
}

TEST(ThermalIntensity, ClampsToUnitRange) {
  ThermalCameraConfig narrow{300.0, 310.0, 0.0};
  EXPECT_EQ(thermal_intensity(0, 0, 0, ThermalParams{}, narrow), 1.0);
  ThermalCameraConfig hot{450.0, 500.0, 0.0};
  EXPECT_EQ(thermal_intensity(0, 0, 0, ThermalParams{}, hot), 0.0);
}

TEST(RenderSyntheticIr, BlackRendersBrighterThanWhite) {
  Image rgb(2, 2, 3, 1.0);
  for (int c = 0; c < 3; ++c) rgb.at(0, 0, c) = 0.0;
  const Image ir = render_synthetic_ir(rgb, ThermalParams{}, ThermalCameraConfig{});
  ASSERT_EQ(ir.channels, 1);
  EXPECT_GT(ir.at(0, 0), ir.at(1, 1));
  EXPECT_EQ(ir.at(0, 1), ir.at(1, 1));
}

TEST(RenderSyntheticIr, DiffusionBlurPreservesConstantImages) {
  Image rgb(6, 5, 3, 0.3);
  ThermalCameraConfig cam;
  cam.diffusion_sigma = 1.5;
  const Image sharp = render_synthetic_ir(rgb, ThermalParams{}, ThermalCameraConfig{});
  const Image blurred = render_synthetic_ir(rgb, ThermalParams{}, cam);
  for (std::size_t i = 0; i < sharp.size(); ++i) EXPECT_NEAR(blurred.data[i], sharp.data[i], 1e-12);
}

TEST(RenderSyntheticIr, RejectsNonRgbInput) {
  EXPECT_THROW(render_synthetic_ir(Image(2, 2, 1), ThermalParams{}, ThermalCameraConfig{}), ShapeError);
}

}  // namespace
}  // namespace cdupatch
