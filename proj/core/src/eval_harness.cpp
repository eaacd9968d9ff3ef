#include "cdupatch/eval_harness.hpp"

#include <algorithm>
#include <random>

#include "cdupatch/compositor.hpp"
#include "cdupatch/errors.hpp"

namespace cdupatch {

std::string to_string(EvalModality m) {
  switch (m) {
    case EvalModality::kVisible: return "visible";
    case EvalModality::kInfrared: return "infrared";
    case EvalModality::kFused: return "fused";
  }
  return "?";
}

double attack_success_rate(int n_clean, int n_patch) {
  if (n_clean <= 0) throw ParameterError("ASR is undefined when no object is detected on clean images");
  if (n_patch < 0) throw ParameterError("negative patched detection count");
  return double(n_clean - n_patch) / double(n_clean);
}

Image IrPatchRenderer::render(const Image& rgb_patch) const {
  if (kind == Kind::kAdapter) {
    if (!adapter) throw ParameterError("adapter renderer selected without an adapter");
    return predict_ir(*adapter, rgb_patch);
  }
  return render_synthetic_ir(rgb_patch, scene, camera);
}

ImagePair apply_patch(const ImagePair& pair, const Image& rgb_patch, const Image& ir_patch, double coverage_cap) {
  if (rgb_patch.channels != 3 || ir_patch.channels != 1 || !rgb_patch.same_extent(ir_patch) ||
      rgb_patch.height != rgb_patch.width) {
    throw ShapeError("apply_patch needs an S x S x 3 patch and its S x S x 1 infrared counterpart");
  }
  ImagePair out = pair;
  const TransformSample id = TransformSample::identity();
  for (const auto& lb : pair.boxes) {
    Placement pl;
    try {
      pl = placement_from_bbox(lb.box, coverage_cap);
    } catch (const ParameterError&) {
      continue;
    }
    const WarpResult v = warp_patch(rgb_patch, pl, id, pair.height(), pair.width());
    out.visible = composite(out.visible, v.canvas, v.mask);
    const WarpResult r = warp_patch(ir_patch, pl, id, pair.height(), pair.width());
    out.infrared = composite(out.infrared, r.canvas, r.mask);
  }
  return out;
}

DetectionPass run_detection_pass(std::span<const ImagePair> pairs, const DetectorHandle& victim, const Patch* patch,
                                 const EvalOptions& opts) {
  if (!victim.backend) throw ParameterError("victim has no backend");
  DetectionPass pass;
  Image ir_patch;
  if (patch) ir_patch = opts.ir_renderer.render(patch->pixels);
  for (const auto& p : pairs) {
    const ImagePair img = patch ? apply_patch(p, patch->pixels, ir_patch, opts.coverage_cap) : p;
    pass.visible.push_back(victim.serves(Modality::kVisible)
                               ? victim.backend->raw_candidates(img.visible, Modality::kVisible)
                               : RawCandidates{});
    pass.infrared.push_back(victim.serves(Modality::kInfrared)
                                ? victim.backend->raw_candidates(img.infrared, Modality::kInfrared)
                                : RawCandidates{});
  }
  return pass;
}

DetectionCounts count_detections(std::span<const ImagePair> pairs, const DetectionPass& pass, double threshold,
                                 const EvalOptions& opts) {
  if (pass.visible.size() != pairs.size() || pass.infrared.size() != pairs.size()) {
    throw ShapeError("detection pass does not cover the dataset");
  }
  const DetectOptions d{threshold, opts.nms_iou};
  DetectionCounts c;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto vis = finalize_detections(pass.visible[i], d);
    const auto ir = finalize_detections(pass.infrared[i], d);
    if (opts.matched) {
      const auto mv = match_ground_truth(vis, pairs[i].boxes, opts.match_iou);
      const auto mi = match_ground_truth(ir, pairs[i].boxes, opts.match_iou);
      for (std::size_t k = 0; k < mv.size(); ++k) {
        c.visible += mv[k];
        c.infrared += mi[k];
        c.fused += (mv[k] || mi[k]);
      }
    } else {
      // Without object identities, an image contributes as many fused detections as its
      // busier modality.
      c.visible += int(vis.size());
      c.infrared += int(ir.size());
      c.fused += int(std::max(vis.size(), ir.size()));
    }
  }
  return c;
}

std::vector<AsrReport> asr_from_passes(std::span<const ImagePair> pairs, const DetectionPass& clean,
                                       const DetectionPass& patched, double threshold, const EvalOptions& opts) {
  const DetectionCounts c = count_detections(pairs, clean, threshold, opts);
  const DetectionCounts p = count_detections(pairs, patched, threshold, opts);
  auto make = [&](EvalModality m, int nc, int np) {
    if (nc == 0) {
      throw ParameterError("ASR is undefined: no " + to_string(m) + " detections on clean images at threshold " +
                           std::to_string(threshold));
    }
    return AsrReport{nc, np, attack_success_rate(nc, np), threshold, m};
  };
  return {make(EvalModality::kVisible, c.visible, p.visible), make(EvalModality::kInfrared, c.infrared, p.infrared),
          make(EvalModality::kFused, c.fused, p.fused)};
}

std::vector<AsrReport> compute_asr(std::span<const ImagePair> pairs, const Patch& patch, const DetectorHandle& victim,
                                   const EvalOptions& opts) {
  const DetectionPass clean = run_detection_pass(pairs, victim, nullptr, opts);
  const DetectionPass patched = run_detection_pass(pairs, victim, &patch, opts);
  return asr_from_passes(pairs, clean, patched, opts.threshold, opts);
}

SweepResult threshold_sweep(std::span<const ImagePair> pairs, const Patch& patch, const DetectorHandle& victim,
                            const std::vector<double>& thresholds, const EvalOptions& opts) {
  if (thresholds.empty()) throw ParameterError("threshold sweep needs at least one threshold");
  SweepResult r;
  r.thresholds = thresholds;
  r.clean = run_detection_pass(pairs, victim, nullptr, opts);
  r.patched = run_detection_pass(pairs, victim, &patch, opts);
  for (double t : thresholds) r.reports.push_back(asr_from_passes(pairs, r.clean, r.patched, t, opts));
  return r;
}

TransferMatrix transfer_eval(std::span<const ImagePair> pairs, const std::map<std::string, Patch>& patches,
                             std::span<const DetectorHandle> victims, const EvalOptions& opts) {
  if (victims.empty()) throw ParameterError("transfer evaluation needs at least one victim");
  TransferMatrix m;
  for (const auto& v : victims) {
    if (!patches.count(v.id)) throw ParameterError("no patch supplied for victim '" + v.id + "'");
    m.victims.push_back(v.id);
  }
  std::vector<DetectionPass> clean;
  for (const auto& v : victims) clean.push_back(run_detection_pass(pairs, v, nullptr, opts));
  for (const auto& row : victims) {
    const Patch& patch = patches.at(row.id);
    std::vector<double> cells;
    std::vector<std::vector<AsrReport>> reps;
    for (std::size_t c = 0; c < victims.size(); ++c) {
      const DetectionPass patched = run_detection_pass(pairs, victims[c], &patch, opts);
      auto rep = asr_from_passes(pairs, clean[c], patched, opts.threshold, opts);
      cells.push_back(rep[2].asr);
      reps.push_back(std::move(rep));
    }
    m.asr.push_back(std::move(cells));
    m.reports.push_back(std::move(reps));
  }
  return m;
}

const std::map<std::string, std::array<double, 3>>& solid_colors() {
  static const std::map<std::string, std::array<double, 3>> colors{
      {"blue", {0.0, 0.0, 1.0}},  {"green", {0.0, 1.0, 0.0}},  {"red", {1.0, 0.0, 0.0}},
      {"white", {1.0, 1.0, 1.0}}, {"yellow", {1.0, 1.0, 0.0}}, {"black", {0.0, 0.0, 0.0}},
      {"gray", {0.5, 0.5, 0.5}},
  };
  return colors;
}

Patch baseline_patch(BaselineKind kind, int size, std::uint64_t seed, const std::string& color) {
  if (size < 1) throw ParameterError("baseline patch size must be positive");
  Patch p;
  p.pixels = Image(size, size, 3);
  if (kind == BaselineKind::kRandom) {
    std::mt19937_64 rng(seed);
    for (double& v : p.pixels.data) v = std::generate_canonical<double, 53>(rng);
    p.config_hash = "baseline-random";
    return p;
  }
  const auto it = solid_colors().find(color);
  if (it == solid_colors().end()) throw ParameterError("unknown baseline colour '" + color + "'");
  for (std::size_t i = 0; i < p.pixels.size(); ++i) p.pixels.data[i] = it->second[i % 3];
  p.config_hash = "baseline-" + color;
  return p;
}

std::vector<AblationRow> ablation_suite(std::span<const ImagePair> train, std::span<const ImagePair> test,
                                        const DetectorHandle& victim, const AdapterModel& adapter,
                                        const AttackConfig& base_cfg, const EvalOptions& opts) {
  struct Variant {
    const char* name;
    bool adapter;
    bool augmentation;
  };
  const std::array<Variant, 3> variants{{{"full", true, true},
                                         {"w/o adapter", false, base_cfg.use_augmentation},
                                         {"w/o augmentation", base_cfg.use_adapter, false}}};
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    AttackConfig cfg = base_cfg;
    cfg.use_adapter = v.adapter;
    cfg.use_augmentation = v.augmentation;
    auto trained = train_patch(train, victim, cfg.use_adapter ? &adapter : nullptr, cfg);
    const auto rep = compute_asr(test, trained.patch, victim, opts);
    rows.push_back({v.name, rep[0].asr, rep[1].asr, rep[2].asr, std::move(trained.patch)});
  }
  return rows;
}

}  // namespace cdupatch
