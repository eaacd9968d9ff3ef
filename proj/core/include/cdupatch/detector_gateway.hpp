#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cdupatch/image.hpp"

namespace cdupatch {

enum class Modality { kVisible, kInfrared, kDual };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& name);

struct Detection {
  Box bbox;
  double score = 0.0;
  int class_id = 0;
};

/// Every candidate a detector considered, before thresholding and suppression.
struct RawCandidates {
  std::vector<Box> boxes;
  std::vector<double> scores;
  std::vector<int> class_ids;

  std::size_t size() const noexcept { return scores.size(); }
};

struct DetectOptions {
  double score_threshold = 0.5;
  double nms_iou = 0.5;
};

/// Intersection over union; 0 for disjoint boxes. Throws ParameterError on a degenerate box.
double iou(const Box& a, const Box& b);

/// Keeps candidates with score >= threshold, then greedy suppression in descending score
/// order (ties broken by candidate index).
std::vector<Detection> finalize_detections(const RawCandidates& raw, const DetectOptions& opts);

/// Target-associated scores with the index of the candidate each came from.
struct ScoreSet {
  std::vector<double> scores;
  std::vector<std::size_t> candidate_index;

  std::size_t size() const noexcept { return scores.size(); }
};

/// Scores of all candidates whose box overlaps some ground-truth box with IoU >= iou_min.
ScoreSet scores_for_targets(const RawCandidates& raw, std::span<const Box> gt_boxes,
                            double iou_min = 0.1);

/// Something that turns one single-modality image into raw candidates.
class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual RawCandidates raw_candidates(const Image& image, Modality branch) const = 0;
  virtual std::uint64_t weights_checksum() const { return 0; }
};

class ToyDetector;
class DualToyDetector;

/// A victim detector as seen by attacks and evaluation.
struct DetectorHandle {
  std::string id;
  bool differentiable = false;
  Modality modality = Modality::kDual;
  std::shared_ptr<const DetectorBackend> backend;

  bool serves(Modality branch) const noexcept {
    return modality == Modality::kDual || modality == branch;
  }
  /// The white-box branch network. Throws CapabilityError when the handle is not
  /// differentiable or does not serve that branch.
  const ToyDetector& branch(Modality branch) const;
  void require_differentiable() const;
  std::uint64_t weights_checksum() const;
};

struct DetectResult {
  std::vector<Detection> visible;
  std::vector<Detection> infrared;
  RawCandidates raw_visible;
  RawCandidates raw_infrared;
};

/// Runs the handle on an aligned pair. An empty image means "modality absent"; a branch the
/// handle serves must be given, with 3 channels for visible and 1 for infrared.
DetectResult detect(const DetectorHandle& handle, const Image& visible, const Image& infrared,
                    const DetectOptions& opts = {});

/// Fraction of ground-truth boxes matched one-to-one by a detection with IoU >= iou_match.
double detection_recall(const DetectorHandle& handle, std::span<const ImagePair> pairs,
                        Modality branch, double threshold = 0.5, double iou_match = 0.5);

/// Greedy one-to-one matching (detections by descending score). Returns, per ground-truth
/// box, whether it was matched.
std::vector<bool> match_ground_truth(std::span<const Detection> detections,
                                     std::span<const LabeledBox> gt, double iou_match);

}  // namespace cdupatch
