#include "cdupatch/thermal_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cdupatch/errors.hpp"

namespace cdupatch {

void ThermalParams::validate() const {
  if (!(absorptivity >= 0.0 && absorptivity <= 1.0))
    throw ParameterError("absorptivity must lie in [0,1], got " + std::to_string(absorptivity));
  if (!(irradiance >= 0.0)) throw ParameterError("irradiance must be >= 0");
  if (!(emissivity > 0.0 && emissivity <= 1.0)) throw ParameterError("emissivity must lie in (0,1]");
  if (!(ambient > 0.0)) throw ParameterError("ambient temperature must be > 0 K");
}

void ThermalCameraConfig::validate() const {
  if (!(t_max > t_min)) throw ParameterError("thermal camera needs t_max > t_min");
  if (!(diffusion_sigma >= 0.0)) throw ParameterError("diffusion_sigma must be >= 0");
}

double surface_temperature(const ThermalParams& p) {
  p.validate();
  if (p.absorptivity == 0.0) return p.ambient;
  const double t4 = p.ambient * p.ambient * p.ambient * p.ambient;
  return std::pow(p.absorptivity * p.irradiance / (p.emissivity * kStefanBoltzmann) + t4, 0.25);
}

double color_to_absorptivity(double r, double g, double b) {
  for (double c : {r, g, b}) {
    if (!(c >= 0.0 && c <= 1.0)) throw ParameterError("colour channel outside [0,1]");
  }
  return kBlackAbsorptivity -
         (kAbsorptivityWeights[0] * r + kAbsorptivityWeights[1] * g + kAbsorptivityWeights[2] * b);
}

double thermal_intensity(double r, double g, double b, const ThermalParams& scene,
                         const ThermalCameraConfig& camera) {
  ThermalParams p = scene;
  p.absorptivity = color_to_absorptivity(r, g, b);
  const double t = surface_temperature(p);
  return std::clamp((t - camera.t_min) / (camera.t_max - camera.t_min), 0.0, 1.0);
}

Image render_synthetic_ir(const Image& rgb, const ThermalParams& scene,
                          const ThermalCameraConfig& camera) {
  camera.validate();
  if (rgb.channels != 3) throw ShapeError("render_synthetic_ir expects an RGB image");
  Image ir(rgb.height, rgb.width, 1);
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      ir.at(y, x) = thermal_intensity(rgb.at(y, x, 0), rgb.at(y, x, 1), rgb.at(y, x, 2), scene, camera);
    }
  }
  return camera.diffusion_sigma > 0 ? gaussian_blur(ir, camera.diffusion_sigma) : ir;
}

}  // namespace cdupatch
