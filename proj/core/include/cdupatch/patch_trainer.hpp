#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdupatch/adversarial_losses.hpp"
#include "cdupatch/compositor.hpp"
#include "cdupatch/data_pipeline.hpp"
#include "cdupatch/detector_gateway.hpp"
#include "cdupatch/ir_adapter.hpp"

namespace cdupatch {

enum class InitMode { kRandom, kGray };
enum class OptimizerKind { kAdam, kSgd };

struct AttackConfig {
  int patch_size = 256;
  int iterations = 1000;
  int batch_size = 8;
  double learning_rate = 0.03;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  LossWeights weights;
  TvReduction tv_reduction = TvReduction::kMean;
  EotConfig eot;
  double coverage_cap = 0.3;
  double iou_min = 0.1;
  std::uint64_t seed = 0;
  bool use_adapter = true;
  bool use_augmentation = true;
  double augmentation_probability = 0.5;
  MultiscaleConfig augmentation;
  InitMode init_mode = InitMode::kRandom;

  void validate() const;
  /// FNV-1a of the canonical JSON form.
  std::string hash() const;
};

void to_json(nlohmann::json& j, const AttackConfig& c);
/// Unknown keys are rejected with ParameterError; missing keys keep their defaults.
void from_json(const nlohmann::json& j, AttackConfig& c);

/// The optimisation variable: S x S x 3 pixels in [0,1] plus provenance.
struct Patch {
  Image pixels;
  std::string config_hash;
  int iterations = 0;
  std::map<std::string, double> final_losses;

  int size() const noexcept { return pixels.height; }
};

/// Gray: every value 0.5. Random: i.i.d. uniform [0,1] from cfg.seed.
Patch init_patch(const AttackConfig& cfg);

/// One target inside one training sample: where the patch goes and how it is transformed in
/// each modality.
struct TargetInstance {
  Placement placement;
  TransformSample visible;
  TransformSample infrared;
};

/// One sample of a training batch with its sampled transforms fixed.
struct BatchSample {
  const ImagePair* pair = nullptr;
  std::vector<TargetInstance> targets;
};

struct ObjectiveValue {
  AdvLossTerms terms;
  double ap_visible = 0.0;   // mean visible score, diagnostic only
  double ap_infrared = 0.0;  // mean infrared score, diagnostic only
  std::size_t n_visible = 0;
  std::size_t n_infrared = 0;
  Image gradient;            // dL/dpatch, empty unless requested
};

/// The attack objective for a fixed batch: composite the patch into both modalities
/// (infrared through the adapter first, then the warp), run the victim, gather target
/// scores, and combine them with the TV term. Evaluation is deterministic for fixed inputs,
/// which makes it usable for finite-difference checks.
class PatchObjective {
 public:
  PatchObjective(const DetectorHandle& victim, const AdapterModel* adapter, const AttackConfig& cfg);

  ObjectiveValue evaluate(const Image& patch, std::span<const BatchSample> batch,
                          bool with_gradient) const;

  /// Only the infrared half of the score term, as a gradient-flow probe.
  ObjectiveValue evaluate_infrared_only(const Image& patch, std::span<const BatchSample> batch) const;

 private:
  ObjectiveValue run(const Image& patch, std::span<const BatchSample> batch, bool with_gradient,
                     bool visible_branch, bool infrared_branch, bool with_tv) const;

  const DetectorHandle& victim_;
  const AdapterModel* adapter_;
  const AttackConfig& cfg_;
};

/// Draws the samples and transforms of iteration `iteration`. Pure function of its inputs.
std::vector<BatchSample> sample_batch(std::span<const ImagePair> dataset, const AttackConfig& cfg,
                                      int iteration, std::vector<ImagePair>& crop_storage);

struct IterationRecord {
  int iteration = 0;
  double tv = 0.0;
  double ap = 0.0;
  double ap_visible = 0.0;
  double ap_infrared = 0.0;
  double total = 0.0;
  std::size_t n_scores = 0;
  double patch_min = 0.0;
  double patch_max = 0.0;
};

struct PatchTrainingResult {
  Patch patch;
  std::vector<IterationRecord> history;
};

using IterationCallback = std::function<void(const IterationRecord&, const Patch&)>;

/// Minimises the adversarial loss over the patch pixels. Only the patch changes; the victim
/// and the adapter stay frozen. Throws CapabilityError for a non-differentiable victim,
/// ParameterError when use_adapter is set without an adapter, TrainingError on a
/// non-finite loss.
PatchTrainingResult train_patch(std::span<const ImagePair> dataset, const DetectorHandle& victim,
                                const AdapterModel* adapter, const AttackConfig& cfg,
                                const IterationCallback& on_iteration = {});

struct PatchLoadResult {
  Patch patch;
  bool sidecar_found = false;
  std::vector<std::string> warnings;
};

/// Writes <path> as an 8-bit PNG and <path>.json with hash, iterations and final losses.
void save_patch(const Patch& patch, const std::filesystem::path& path);
/// A missing sidecar is a warning; a hash differing from expected_hash is a warning.
PatchLoadResult load_patch(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_hash = std::nullopt);

std::filesystem::path sidecar_path(const std::filesystem::path& patch_path);

}  // namespace cdupatch
