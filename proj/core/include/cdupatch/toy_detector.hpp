#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cdupatch/data_pipeline.hpp"
#include "cdupatch/detector_gateway.hpp"
#include "cdupatch/nn.hpp"

namespace cdupatch {

struct ToyDetectorConfig {
  int in_channels = 3;
  std::array<int, 3> widths{8, 16, 16};
  double leaky_slope = 0.05;
  double size_reference = 16.0;  // pixels; box side = exp(t) * size_reference
};

/// Single-class anchor-free detector: four convolutions down to a stride-4 grid, then a
/// 1x1 head producing (objectness, dx, dy, log w, log h) per cell. Every cell is a
/// candidate; its score is sigmoid(objectness).
class ToyDetector {
 public:
  static constexpr int kHeadChannels = 5;
  static constexpr int kLayers = 5;

  ToyDetector(const ToyDetectorConfig& cfg, std::uint64_t seed);
  ToyDetector(const ToyDetectorConfig& cfg, std::vector<double> params);

  struct Forward {
    int image_h = 0;
    int image_w = 0;
    std::array<nn::FeatureMap, kLayers + 1> act;  // act[0] is the input
    std::array<nn::RowMatrix, kLayers> pre;       // pre-activation of each layer
    std::array<nn::RowMatrix, kLayers> cols;
    const nn::RowMatrix& head() const { return act[kLayers].values; }
    int grid_h() const { return act[kLayers].height; }
    int grid_w() const { return act[kLayers].width; }
  };

  Forward forward(const Image& image) const;
  RawCandidates decode(const Forward& f) const;
  RawCandidates raw_candidates(const Image& image) const { return decode(forward(image)); }

  /// Backpropagates a head gradient (kHeadChannels x cells). Either output may be skipped.
  void backward(const Forward& f, const nn::RowMatrix& grad_head, std::span<double> grad_params,
                Image* grad_input) const;

  /// Gradient of sum_k weights[k] * score[cells[k]] with respect to the input image.
  Image score_input_gradient(const Forward& f, std::span<const std::size_t> cells,
                             std::span<const double> weights) const;

  const ToyDetectorConfig& config() const noexcept { return cfg_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> mutable_parameters() noexcept { return params_; }
  std::uint64_t checksum() const;

 private:
  void build_layers();

  ToyDetectorConfig cfg_;
  std::vector<nn::Conv2d> layers_;
  std::vector<double> params_;
};

/// Two independent single-modality branches bundled as one dual-modal victim.
class DualToyDetector final : public DetectorBackend {
 public:
  DualToyDetector(ToyDetector visible, ToyDetector infrared)
      : visible_(std::move(visible)), infrared_(std::move(infrared)) {}

  RawCandidates raw_candidates(const Image& image, Modality branch) const override;
  std::uint64_t weights_checksum() const override;

  const ToyDetector& branch(Modality m) const;
  ToyDetector& mutable_branch(Modality m);

 private:
  ToyDetector visible_;
  ToyDetector infrared_;
};

struct DetectorTrainingConfig {
  std::string id = "toy";
  ToyDetectorConfig architecture;  // in_channels is set per branch
  std::uint64_t variant_seed = 0;
  int epochs = 40;        // epochs before the first recall check
  int max_epochs = 80;    // recall is re-checked after every extra epoch up to this cap
  int batch_size = 16;
  double learning_rate = 3e-3;
  double recall_target = 0.9;
  int min_train_images = 500;
  double augmentation_probability = 0.5;  // chance a sample is replaced by a multi-scale crop
  MultiscaleConfig augmentation;
  double box_weight = 1.0;
  /// Objectness target of positive cells. Below 1 it keeps clean scores out of saturation.
  double positive_target = 0.9;
  /// Chance a sample gets a noise or solid occluder pasted over the top of each vehicle.
  /// Off by default: even small rates teach the victim to ignore the patch region.
  double occlusion_probability = 0.0;
  double occlusion_coverage = 0.3;
};

struct DetectorTrainingReport {
  int epochs_run = 0;
  double recall_visible = 0.0;
  double recall_infrared = 0.0;
  bool target_met = false;
  std::vector<double> loss_history;  // mean training loss per epoch, both branches summed
};

struct DetectorTrainingResult {
  DetectorHandle handle;
  DetectorTrainingReport report;
};

/// Trains both branches on the synthetic training split and checks clean recall on `val`.
/// Throws TrainingError when the recall target is still unmet after max_epochs, and
/// ParameterError when fewer than min_train_images samples are supplied.
DetectorTrainingResult train_toy_detector(std::span<const ImagePair> train,
                                          std::span<const ImagePair> val,
                                          const DetectorTrainingConfig& cfg);

/// Per-image detector loss and its head gradient, exposed for tests. Objectness is binary
/// cross-entropy against positive_target on positive cells and 0 on negative cells.
double detector_loss(const ToyDetector& det, const ToyDetector::Forward& f,
                     std::span<const LabeledBox> gt, double box_weight, double positive_target,
                     nn::RowMatrix* grad_head);

DetectorHandle make_toy_handle(std::string id, ToyDetector visible, ToyDetector infrared);

/// Binary container "CDUD": version, id, both branch architectures and parameters.
void save_detector(const DetectorHandle& handle, const std::filesystem::path& path);
DetectorHandle load_detector(const std::filesystem::path& path);

}  // namespace cdupatch
