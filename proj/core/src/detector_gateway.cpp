#include "cdupatch/detector_gateway.hpp"

#include <algorithm>
#include <numeric>

#include "cdupatch/errors.hpp"
#include "cdupatch/toy_detector.hpp"

namespace cdupatch {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kVisible: return "visible";
    case Modality::kInfrared: return "infrared";
    case Modality::kDual: return "dual";
  }
  return "?";
}

Modality modality_from_string(const std::string& name) {
  if (name == "visible") return Modality::kVisible;
  if (name == "infrared") return Modality::kInfrared;
  if (name == "dual") return Modality::kDual;
  throw ParameterError("unknown modality '" + name + "' (expected visible, infrared or dual)");
}

double iou(const Box& a, const Box& b) {
  if (!a.well_ordered() || !b.well_ordered()) throw ParameterError("iou of a degenerate box");
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::vector<Detection> finalize_detections(const RawCandidates& raw, const DetectOptions& opts) {
  if (!(opts.score_threshold >= 0 && opts.score_threshold <= 1)) throw ParameterError("score threshold must lie in [0,1]");
  if (!(opts.nms_iou > 0 && opts.nms_iou <= 1)) throw ParameterError("NMS IoU must lie in (0,1]");
  if (raw.boxes.size() != raw.scores.size() || raw.class_ids.size() != raw.scores.size()) {
    throw ShapeError("raw candidate arrays differ in length");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw.scores[i] >= opts.score_threshold) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return raw.scores[a] > raw.scores[b]; });
  std::vector<Detection> kept;
  for (std::size_t i : idx) {
    bool suppressed = false;
    for (const auto& d : kept) {
      if (d.class_id == raw.class_ids[i] && iou(d.bbox, raw.boxes[i]) > opts.nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back({raw.boxes[i], raw.scores[i], raw.class_ids[i]});
  }
  return kept;
}

ScoreSet scores_for_targets(const RawCandidates& raw, std::span<const Box> gt_boxes, double iou_min) {
  if (!(iou_min > 0 && iou_min <= 1)) throw ParameterError("target IoU must lie in (0,1]");
  ScoreSet set;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (const Box& g : gt_boxes) {
      if (iou(raw.boxes[i], g) >= iou_min) {
        set.scores.push_back(raw.scores[i]);
        set.candidate_index.push_back(i);
        break;
      }
    }
  }
  return set;
}

void DetectorHandle::require_differentiable() const {
  if (!differentiable) throw CapabilityError("detector '" + id + "' is not differentiable (black-box only)");
}

const ToyDetector& DetectorHandle::branch(Modality m) const {
  require_differentiable();
  if (m == Modality::kDual) throw ParameterError("branch() needs a single modality");
  if (!serves(m)) throw CapabilityError("detector '" + id + "' has no " + to_string(m) + " branch");
  const auto* dual = dynamic_cast<const DualToyDetector*>(backend.get());
  if (!dual) throw CapabilityError("detector '" + id + "' exposes no white-box network");
  return dual->branch(m);
}

std::uint64_t DetectorHandle::weights_checksum() const { return backend ? backend->weights_checksum() : 0; }

namespace {
void check_branch_input(const DetectorHandle& h, const Image& img, Modality m, int channels) {
  if (!h.serves(m)) return;
  if (img.empty()) throw ParameterError("detector '" + h.id + "' needs a " + to_string(m) + " image");
  if (img.channels != channels) {
    throw ShapeError(to_string(m) + " image must have " + std::to_string(channels) + " channel(s)");
  }
}
}  // namespace

DetectResult detect(const DetectorHandle& handle, const Image& visible, const Image& infrared,
                    const DetectOptions& opts) {
  if (!handle.backend) throw ParameterError("detector handle has no backend");
  check_branch_input(handle, visible, Modality::kVisible, 3);
  check_branch_input(handle, infrared, Modality::kInfrared, 1);
  if (handle.serves(Modality::kVisible) && handle.serves(Modality::kInfrared) && !visible.same_extent(infrared)) {
    throw ShapeError("visible and infrared images are not aligned");
  }
  DetectResult r;
  if (handle.serves(Modality::kVisible)) {
    r.raw_visible = handle.backend->raw_candidates(visible, Modality::kVisible);
    r.visible = finalize_detections(r.raw_visible, opts);
  }
  if (handle.serves(Modality::kInfrared)) {
    r.raw_infrared = handle.backend->raw_candidates(infrared, Modality::kInfrared);
    r.infrared = finalize_detections(r.raw_infrared, opts);
  }
  return r;
}

std::vector<bool> match_ground_truth(std::span<const Detection> detections, std::span<const LabeledBox> gt,
                                     double iou_match) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });
  std::vector<bool> matched(gt.size(), false);
  for (std::size_t d : order) {
    double best = iou_match;
    std::ptrdiff_t best_k = -1;
    for (std::size_t k = 0; k < gt.size(); ++k) {
      if (matched[k]) continue;
      const double v = iou(detections[d].bbox, gt[k].box);
      if (v >= best) {
        if (best_k < 0 || v > best) {
          best = v;
          best_k = static_cast<std::ptrdiff_t>(k);
        }
      }
    }
    if (best_k >= 0) matched[std::size_t(best_k)] = true;
  }
  return matched;
}

double detection_recall(const DetectorHandle& handle, std::span<const ImagePair> pairs, Modality branch,
                        double threshold, double iou_match) {
  if (branch == Modality::kDual) throw ParameterError("recall is measured per branch");
  if (!handle.serves(branch)) throw CapabilityError("detector '" + handle.id + "' has no " + to_string(branch) + " branch");
  std::size_t total = 0, hit = 0;
  const DetectOptions opts{threshold, 0.5};
  for (const auto& p : pairs) {
    const Image& img = branch == Modality::kVisible ? p.visible : p.infrared;
    const auto dets = finalize_detections(handle.backend->raw_candidates(img, branch), opts);
    const auto m = match_ground_truth(dets, p.boxes, iou_match);
    total += m.size();
    hit += static_cast<std::size_t>(std::count(m.begin(), m.end(), true));
  }
  return total == 0 ? 0.0 : double(hit) / double(total);
}

}  // namespace cdupatch
