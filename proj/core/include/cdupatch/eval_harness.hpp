#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdupatch/detector_gateway.hpp"
#include "cdupatch/ir_adapter.hpp"
#include "cdupatch/patch_trainer.hpp"
#include "cdupatch/thermal_model.hpp"

namespace cdupatch {

enum class EvalModality { kVisible, kInfrared, kFused };
std::string to_string(EvalModality m);

struct AsrReport {
  int n_clean = 0;
  int n_patch = 0;
  double asr = 0.0;
  double threshold = 0.5;
  EvalModality modality = EvalModality::kFused;
};

/// (n_clean - n_patch) / n_clean. Throws ParameterError when n_clean is 0.
double attack_success_rate(int n_clean, int n_patch);

/// How the infrared appearance of an RGB patch is produced at evaluation time.
struct IrPatchRenderer {
  enum class Kind { kPhysics, kAdapter };
  Kind kind = Kind::kPhysics;
  ThermalParams scene;
  ThermalCameraConfig camera;
  const AdapterModel* adapter = nullptr;

  Image render(const Image& rgb_patch) const;
};

struct EvalOptions {
  double threshold = 0.5;
  bool matched = true;       // count only detections with IoU >= match_iou to ground truth
  double match_iou = 0.5;
  double nms_iou = 0.5;
  double coverage_cap = 0.3;
  IrPatchRenderer ir_renderer;
};

/// Raw candidates for every image of a dataset, with or without the patch applied.
/// Thresholding happens later so one pass serves any number of thresholds.
struct DetectionPass {
  std::vector<RawCandidates> visible;
  std::vector<RawCandidates> infrared;
};

/// Applies the patch (identity transform, evaluation placement) to every box of the pair.
ImagePair apply_patch(const ImagePair& pair, const Image& rgb_patch, const Image& ir_patch,
                      double coverage_cap);

DetectionPass run_detection_pass(std::span<const ImagePair> pairs, const DetectorHandle& victim,
                                 const Patch* patch, const EvalOptions& opts);

/// Detected-object counts per modality for one threshold.
struct DetectionCounts {
  int visible = 0;
  int infrared = 0;
  int fused = 0;
};
DetectionCounts count_detections(std::span<const ImagePair> pairs, const DetectionPass& pass,
                                 double threshold, const EvalOptions& opts);

/// Three reports (visible, infrared, fused). Throws ParameterError if no object is detected
/// on clean images in some modality.
std::vector<AsrReport> asr_from_passes(std::span<const ImagePair> pairs, const DetectionPass& clean,
                                       const DetectionPass& patched, double threshold,
                                       const EvalOptions& opts);

std::vector<AsrReport> compute_asr(std::span<const ImagePair> pairs, const Patch& patch,
                                   const DetectorHandle& victim, const EvalOptions& opts = {});

inline const std::vector<double> kDefaultThresholds{0.3, 0.4, 0.5, 0.6, 0.7};

struct SweepResult {
  std::vector<double> thresholds;
  std::vector<std::vector<AsrReport>> reports;  // per threshold: visible, infrared, fused
  DetectionPass clean;
  DetectionPass patched;
};

/// One clean and one patched detection pass, filtered at every threshold.
SweepResult threshold_sweep(std::span<const ImagePair> pairs, const Patch& patch,
                            const DetectorHandle& victim,
                            const std::vector<double>& thresholds = kDefaultThresholds,
                            const EvalOptions& opts = {});

/// Rows are patch sources, columns evaluated victims, cells the fused ASR at the threshold.
struct TransferMatrix {
  std::vector<std::string> victims;
  std::vector<std::vector<double>> asr;  // [row][col], fused
  std::vector<std::vector<std::vector<AsrReport>>> reports;  // [row][col] -> 3 reports

  double cell(std::size_t row, std::size_t col) const { return asr.at(row).at(col); }
};

TransferMatrix transfer_eval(std::span<const ImagePair> pairs,
                             const std::map<std::string, Patch>& patches,
                             std::span<const DetectorHandle> victims, const EvalOptions& opts = {});

/// The named solid colours available as baselines.
const std::map<std::string, std::array<double, 3>>& solid_colors();

enum class BaselineKind { kRandom, kSolid };
/// Random: i.i.d. uniform pixels from seed. Solid: the named colour; unknown names throw
/// ParameterError.
Patch baseline_patch(BaselineKind kind, int size, std::uint64_t seed, const std::string& color = "");

struct AblationRow {
  std::string variant;
  double asr_visible = 0.0;
  double asr_infrared = 0.0;
  double asr_fused = 0.0;
  Patch patch;
};

/// Trains and evaluates full, w/o-adapter and w/o-augmentation variants with a shared seed.
std::vector<AblationRow> ablation_suite(std::span<const ImagePair> train,
                                        std::span<const ImagePair> test,
                                        const DetectorHandle& victim, const AdapterModel& adapter,
                                        const AttackConfig& base_cfg, const EvalOptions& opts = {});

}  // namespace cdupatch
