#pragma once

#include <array>

#include "cdupatch/image.hpp"

namespace cdupatch {

/// W / (m^2 K^4).
inline constexpr double kStefanBoltzmann = 5.670374419e-8;

/// Inputs of the radiative equilibrium model. Temperatures are Kelvin, irradiance W/m^2.
struct ThermalParams {
  double absorptivity = 0.0;  // alpha in [0,1]
  double irradiance = 1000.0;  // G >= 0
  double emissivity = 0.95;   // eps in (0,1]
  double ambient = 300.0;     // T_ambient > 0

  void validate() const;
};

/// Linear intensity ramp of the simulated thermal camera.
struct ThermalCameraConfig {
  double t_min = 290.0;  // temperature mapped to intensity 0
  double t_max = 400.0;  // temperature mapped to intensity 1
  double diffusion_sigma = 0.0;  // Gaussian blur radius in pixels, 0 disables

  void validate() const;
};

/// Per-channel weights of the affine colour -> absorptivity model.
inline constexpr std::array<double, 3> kAbsorptivityWeights{0.40, 0.15, 0.15};
inline constexpr double kBlackAbsorptivity = 0.9;

/// Steady-state surface temperature ((alpha G)/(eps sigma) + T_amb^4)^(1/4), in Kelvin.
double surface_temperature(const ThermalParams& params);

/// alpha(r,g,b) = 0.9 - (0.40 r + 0.15 g + 0.15 b). Channels must lie in [0,1].
double color_to_absorptivity(double r, double g, double b);

/// Scalar chain colour -> absorptivity -> temperature -> clamped camera intensity.
/// The absorptivity field of `scene` is ignored.
double thermal_intensity(double r, double g, double b, const ThermalParams& scene,
                         const ThermalCameraConfig& camera);

/// Renders the infrared counterpart (H x W x 1) of an RGB image pixel by pixel, then
/// applies the camera's diffusion blur if enabled.
Image render_synthetic_ir(const Image& rgb, const ThermalParams& scene,
                          const ThermalCameraConfig& camera);

}  // namespace cdupatch
