#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cdupatch/image.hpp"

namespace cdupatch {

using Rgb = std::array<double, 3>;

/// Aligned (rgb, ir) pixel samples used to fit the adapter.
struct PixelPairSet {
  std::vector<Rgb> inputs;
  std::vector<double> targets;

  std::size_t size() const noexcept { return inputs.size(); }
  void validate() const;
};

/// Pixel-wise RGB -> infrared intensity map: a 3 -> 64 -> 64 -> 1 perceptron with
/// rectifier hidden units and a logistic output.
class AdapterModel {
 public:
  static constexpr std::array<int, 4> kLayerSizes{3, 64, 64, 1};
  static constexpr int kFileVersion = 1;

  /// He-uniform weights, zero biases.
  static AdapterModel initialized(std::uint64_t seed);
  /// Wraps an existing flat parameter vector (layout documented in ir_adapter.cpp).
  static AdapterModel from_parameters(std::vector<double> params);
  static std::size_t parameter_count();

  double predict(const Rgb& rgb) const;
  /// Prediction plus d(prediction)/d(rgb).
  double predict_with_gradient(const Rgb& rgb, Rgb& grad) const;

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> mutable_parameters() noexcept { return params_; }
  std::uint64_t checksum() const;

 private:
  AdapterModel() = default;
  std::vector<double> params_;
};

struct AdapterTrainingConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  int batch_size = 256;
  std::uint64_t seed = 0;
};

struct AdapterTrainingResult {
  AdapterModel model;
  std::vector<double> loss_history;  // full-set MSE after each epoch
};

/// Draws n aligned pixel pairs uniformly over all pixels of all pairs (with replacement).
PixelPairSet sample_pixel_pairs(std::span<const ImagePair> pairs, int n, std::uint64_t seed);

/// Minimises the mean squared error between predictions and targets with Adam.
/// Throws TrainingError (carrying the epoch) if the loss becomes non-finite.
AdapterTrainingResult train_adapter(const PixelPairSet& pairs, const AdapterTrainingConfig& cfg);

double adapter_mse(const AdapterModel& model, const PixelPairSet& pairs);

/// H x W x 3 -> H x W x 1 by applying the network at every pixel.
Image predict_ir(const AdapterModel& model, const Image& rgb);

/// Vector-Jacobian product of predict_ir: given dL/d(output) (H x W x 1) returns
/// dL/d(rgb) (H x W x 3). Exact because the map is pixel-local.
Image predict_ir_backward(const AdapterModel& model, const Image& rgb, const Image& grad_output);

/// Binary container: magic "CDUA", u32 version, u32 layer count, u32 sizes[], then the
/// float64 parameters little-endian. Round-trips bit-exactly.
void save_adapter(const AdapterModel& model, const std::filesystem::path& path);
AdapterModel load_adapter(const std::filesystem::path& path);

}  // namespace cdupatch
