#include "cdupatch/patch_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "cdupatch/adam.hpp"
#include "cdupatch/errors.hpp"
#include "cdupatch/hashing.hpp"
#include "cdupatch/png_io.hpp"
#include "cdupatch/toy_detector.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cdupatch {

// ------------------------------------------------------------------------------ config

void AttackConfig::validate() const {
  if (patch_size < 2) throw ParameterError("patch_size must be at least 2");
  if (iterations < 1) throw ParameterError("iterations must be positive");
  if (batch_size < 1) throw ParameterError("batch_size must be positive");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ParameterError("learning_rate must be positive");
  weights.validate();
  eot.validate();
  if (!(coverage_cap > 0 && coverage_cap <= 1)) throw ParameterError("coverage_cap must lie in (0,1]");
  if (!(iou_min > 0 && iou_min <= 1)) throw ParameterError("iou_min must lie in (0,1]");
  if (!(augmentation_probability >= 0 && augmentation_probability <= 1)) {
    throw ParameterError("augmentation_probability must lie in [0,1]");
  }
  if (augmentation.dilation_factors.empty()) throw ParameterError("augmentation needs dilation factors");
}

std::string AttackConfig::hash() const {
  json j = *this;
  return to_hex(fnv1a(j.dump()));
}

namespace {

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ParameterError("'" + key + "' must be a [lo, hi] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ParameterError(where + " must be a JSON object");
  const std::set<std::string> k(known.begin(), known.end());
  for (const auto& [key, _] : j.items())
    if (!k.count(key)) throw ParameterError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError(std::string("key '") + key + "' has the wrong type");
  }
}

}  // namespace

void to_json(json& j, const AttackConfig& c) {
  j = json{
      {"patch_size", c.patch_size},
      {"iterations", c.iterations},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"optimizer", c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
      {"weights", {{"gamma", c.weights.gamma}, {"delta", c.weights.delta}}},
      {"tv_reduction", c.tv_reduction == TvReduction::kMean ? "mean" : "sum"},
      {"eot",
       {{"rotation_deg", range_json(c.eot.rotation_deg)},
        {"scale", range_json(c.eot.scale)},
        {"brightness", range_json(c.eot.brightness)},
        {"blur_sigma", range_json(c.eot.blur_sigma)}}},
      {"coverage_cap", c.coverage_cap},
      {"iou_min", c.iou_min},
      {"seed", c.seed},
      {"use_adapter", c.use_adapter},
      {"use_augmentation", c.use_augmentation},
      {"augmentation_probability", c.augmentation_probability},
      {"augmentation",
       {{"dilation_factors", c.augmentation.dilation_factors},
        {"output_height", c.augmentation.output_height},
        {"output_width", c.augmentation.output_width},
        {"min_visible_fraction", c.augmentation.min_visible_fraction}}},
      {"init_mode", c.init_mode == InitMode::kGray ? "gray" : "random"},
  };
}

void from_json(const json& j, AttackConfig& c) {
  reject_unknown(j,
                 {"patch_size", "iterations", "batch_size", "learning_rate", "optimizer", "weights", "tv_reduction",
                  "eot", "coverage_cap", "iou_min", "seed", "use_adapter", "use_augmentation",
                  "augmentation_probability", "augmentation", "init_mode"},
                 "attack config");
  read_key(j, "patch_size", c.patch_size);
  read_key(j, "iterations", c.iterations);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "learning_rate", c.learning_rate);
  if (j.contains("optimizer")) {
    const auto s = j.at("optimizer").get<std::string>();
    if (s == "adam") c.optimizer = OptimizerKind::kAdam;
    else if (s == "sgd") c.optimizer = OptimizerKind::kSgd;
    else throw ParameterError("optimizer must be 'adam' or 'sgd'");
  }
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    reject_unknown(w, {"gamma", "delta"}, "weights");
    read_key(w, "gamma", c.weights.gamma);
    read_key(w, "delta", c.weights.delta);
  }
  if (j.contains("tv_reduction")) {
    const auto s = j.at("tv_reduction").get<std::string>();
    if (s == "mean") c.tv_reduction = TvReduction::kMean;
    else if (s == "sum") c.tv_reduction = TvReduction::kSum;
    else throw ParameterError("tv_reduction must be 'mean' or 'sum'");
  }
  if (j.contains("eot")) {
    const auto& e = j.at("eot");
    reject_unknown(e, {"rotation_deg", "scale", "brightness", "blur_sigma"}, "eot");
    if (e.contains("rotation_deg")) c.eot.rotation_deg = range_from(e["rotation_deg"], "rotation_deg");
    if (e.contains("scale")) c.eot.scale = range_from(e["scale"], "scale");
    if (e.contains("brightness")) c.eot.brightness = range_from(e["brightness"], "brightness");
    if (e.contains("blur_sigma")) c.eot.blur_sigma = range_from(e["blur_sigma"], "blur_sigma");
  }
  read_key(j, "coverage_cap", c.coverage_cap);
  read_key(j, "iou_min", c.iou_min);
  read_key(j, "seed", c.seed);
  read_key(j, "use_adapter", c.use_adapter);
  read_key(j, "use_augmentation", c.use_augmentation);
  read_key(j, "augmentation_probability", c.augmentation_probability);
  if (j.contains("augmentation")) {
    const auto& a = j.at("augmentation");
    reject_unknown(a, {"dilation_factors", "output_height", "output_width", "min_visible_fraction"}, "augmentation");
    read_key(a, "dilation_factors", c.augmentation.dilation_factors);
    read_key(a, "output_height", c.augmentation.output_height);
    read_key(a, "output_width", c.augmentation.output_width);
    read_key(a, "min_visible_fraction", c.augmentation.min_visible_fraction);
  }
  if (j.contains("init_mode")) {
    const auto s = j.at("init_mode").get<std::string>();
    if (s == "gray") c.init_mode = InitMode::kGray;
    else if (s == "random") c.init_mode = InitMode::kRandom;
    else throw ParameterError("init_mode must be 'random' or 'gray'");
  }
}

Patch init_patch(const AttackConfig& cfg) {
  cfg.validate();
  Patch p;
  p.pixels = Image(cfg.patch_size, cfg.patch_size, 3, 0.5);
  p.config_hash = cfg.hash();
  if (cfg.init_mode == InitMode::kRandom) {
    std::mt19937_64 rng(cfg.seed);
    for (double& v : p.pixels.data) v = std::generate_canonical<double, 53>(rng);
  }
  return p;
}

// ----------------------------------------------------------------------------- batches

std::vector<BatchSample> sample_batch(std::span<const ImagePair> dataset, const AttackConfig& cfg, int iteration,
                                      std::vector<ImagePair>& crop_storage) {
  if (dataset.empty()) throw ParameterError("attack dataset is empty");
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(iteration), 0xa77acu};
  std::mt19937_64 rng(seq);
  const std::uint64_t transform_seed = rng();
  crop_storage.clear();
  crop_storage.reserve(std::size_t(cfg.batch_size));  // keeps pointers into it stable
  std::vector<BatchSample> batch;
  std::uint64_t transform_index = 0;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const ImagePair* pair = &dataset[rng() % dataset.size()];
    const double u = std::generate_canonical<double, 53>(rng);
    const std::uint64_t crop_seed = rng();
    if (cfg.use_augmentation && u < cfg.augmentation_probability && !pair->boxes.empty()) {
      crop_storage.push_back(random_multiscale_crop(*pair, cfg.augmentation, crop_seed));
      pair = &crop_storage.back();
    }
    BatchSample s{pair, {}};
    for (const auto& lb : pair->boxes) {
      const std::uint64_t k = transform_index++;
      Placement placement;
      try {
        placement = placement_from_bbox(lb.box, cfg.coverage_cap);
      } catch (const ParameterError&) {
        continue;  // box too small to carry a patch
      }
      const TransformSample vis = sample_transform(cfg.eot, transform_seed, k);
      s.targets.push_back({placement, vis, resample_photometric(vis, cfg.eot, transform_seed, k)});
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

// --------------------------------------------------------------------------- objective

PatchObjective::PatchObjective(const DetectorHandle& victim, const AdapterModel* adapter, const AttackConfig& cfg)
    : victim_(victim), adapter_(adapter), cfg_(cfg) {
  victim_.require_differentiable();
}

namespace {

struct BranchPass {
  std::vector<double> scores;
  Image grad_patch;  // d(sum of scores)/d(branch patch)
};

// Pastes `branch_patch` onto every target of every sample, runs the branch network and
// collects the target scores. With a gradient, returns d(sum of scores)/d(branch_patch).
BranchPass run_branch(const ToyDetector& net, const Image& branch_patch, std::span<const BatchSample> batch,
                      Modality modality, double iou_min, bool with_gradient) {
  BranchPass out;
  if (with_gradient) out.grad_patch = Image(branch_patch.height, branch_patch.width, branch_patch.channels);
  const int C = branch_patch.channels;
  for (const auto& s : batch) {
    if (s.targets.empty()) continue;
    const Image& clean = modality == Modality::kVisible ? s.pair->visible : s.pair->infrared;
    Image img = clean;
    std::vector<PatchWarp> warps;
    warps.reserve(s.targets.size());
    for (const auto& t : s.targets) {
      const TransformSample& tr = modality == Modality::kVisible ? t.visible : t.infrared;
      warps.emplace_back(branch_patch.height, C, t.placement, tr, img.height, img.width);
      const Image canvas = warps.back().forward(branch_patch);
      img = composite(img, canvas, warps.back().mask());
    }
    const auto f = net.forward(img);
    const RawCandidates raw = net.decode(f);
    std::vector<Box> gt;
    for (const auto& lb : s.pair->boxes) gt.push_back(lb.box);
    const ScoreSet set = scores_for_targets(raw, gt, iou_min);
    out.scores.insert(out.scores.end(), set.scores.begin(), set.scores.end());
    if (!with_gradient || set.size() == 0) continue;

    const std::vector<double> ones(set.size(), 1.0);
    Image g_img = net.score_input_gradient(f, set.candidate_index, ones);
    // Later targets were pasted on top, so they own the overlapping pixels.
    for (std::size_t k = warps.size(); k-- > 0;) {
      const CompositeGrad cg = composite_backward(g_img, warps[k].mask());
      const Image gp = warps[k].backward(cg.patch_canvas);
      for (std::size_t i = 0; i < gp.size(); ++i) out.grad_patch.data[i] += gp.data[i];
      g_img = cg.image;
    }
  }
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

}  // namespace

ObjectiveValue PatchObjective::run(const Image& patch, std::span<const BatchSample> batch, bool with_gradient,
                                   bool visible_branch, bool infrared_branch, bool with_tv) const {
  if (patch.channels != 3 || patch.height != patch.width) throw ShapeError("patch must be S x S x 3");
  ObjectiveValue v;
  BranchPass vis, ir;
  if (visible_branch) {
    vis = run_branch(victim_.branch(Modality::kVisible), patch, batch, Modality::kVisible, cfg_.iou_min, with_gradient);
  }
  Image ir_patch;
  if (infrared_branch) {
    if (!adapter_) throw ParameterError("the infrared branch needs an adapter");
    ir_patch = predict_ir(*adapter_, patch);
    ir = run_branch(victim_.branch(Modality::kInfrared), ir_patch, batch, Modality::kInfrared, cfg_.iou_min,
                    with_gradient);
  }
  LossWeights w = cfg_.weights;
  if (!with_tv) w.gamma = 0.0;
  v.terms = adv_loss(patch, vis.scores, ir.scores, w, cfg_.tv_reduction);
  v.ap_visible = mean(vis.scores);
  v.ap_infrared = mean(ir.scores);
  v.n_visible = vis.scores.size();
  v.n_infrared = ir.scores.size();
  if (!with_gradient) return v;

  AdvLossGrad g = adv_loss_gradient(patch, v.terms.n_scores, w, cfg_.tv_reduction);
  v.gradient = std::move(g.patch);
  if (visible_branch)
    for (std::size_t i = 0; i < v.gradient.size(); ++i) v.gradient.data[i] += g.per_score * vis.grad_patch.data[i];
  if (infrared_branch && g.per_score != 0.0) {
    for (double& x : ir.grad_patch.data) x *= g.per_score;
    const Image grgb = predict_ir_backward(*adapter_, patch, ir.grad_patch);
    for (std::size_t i = 0; i < v.gradient.size(); ++i) v.gradient.data[i] += grgb.data[i];
  }
  return v;
}

ObjectiveValue PatchObjective::evaluate(const Image& patch, std::span<const BatchSample> batch,
                                        bool with_gradient) const {
  const bool ir = cfg_.use_adapter && victim_.serves(Modality::kInfrared);
  return run(patch, batch, with_gradient, victim_.serves(Modality::kVisible), ir, true);
}

ObjectiveValue PatchObjective::evaluate_infrared_only(const Image& patch, std::span<const BatchSample> batch) const {
  return run(patch, batch, true, false, true, false);
}

// ---------------------------------------------------------------------------- training

PatchTrainingResult train_patch(std::span<const ImagePair> dataset, const DetectorHandle& victim,
                                const AdapterModel* adapter, const AttackConfig& cfg,
                                const IterationCallback& on_iteration) {
  cfg.validate();
  victim.require_differentiable();
  if (cfg.use_adapter && !adapter) throw ParameterError("use_adapter is set but no adapter was supplied");
  if (dataset.empty()) throw ParameterError("attack dataset is empty");

  PatchTrainingResult result{init_patch(cfg), {}};
  Image& kappa = result.patch.pixels;
  const PatchObjective objective(victim, adapter, cfg);
  Adam adam(kappa.size(), AdamOptions{.learning_rate = cfg.learning_rate});
  Sgd sgd(cfg.learning_rate, 0.9);
  std::vector<ImagePair> crops;

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto batch = sample_batch(dataset, cfg, it, crops);
    const ObjectiveValue v = objective.evaluate(kappa, batch, true);
    bool finite = std::isfinite(v.terms.total);
    for (double g : v.gradient.data) finite = finite && std::isfinite(g);
    if (!finite) {
      throw TrainingError("non-finite adversarial loss at iteration " + std::to_string(it) + " (tv " +
                              std::to_string(v.terms.tv) + ", ap " + std::to_string(v.terms.ap) + ")",
                          it);
    }
    if (cfg.optimizer == OptimizerKind::kAdam) {
      adam.step(kappa.data, v.gradient.data);
    } else {
      sgd.step(kappa.data, v.gradient.data);
    }
    for (double& x : kappa.data) x = std::clamp(x, 0.0, 1.0);

    IterationRecord rec{it, v.terms.tv, v.terms.ap, v.ap_visible, v.ap_infrared, v.terms.total, v.terms.n_scores,
                        *std::min_element(kappa.data.begin(), kappa.data.end()),
                        *std::max_element(kappa.data.begin(), kappa.data.end())};
    result.history.push_back(rec);
    result.patch.iterations = it + 1;
    if (on_iteration) on_iteration(rec, result.patch);
  }
  const auto& last = result.history.back();
  result.patch.final_losses = {{"tv", last.tv}, {"ap", last.ap}, {"total", last.total}};
  return result;
}

// ------------------------------------------------------------------------------ storage

fs::path sidecar_path(const fs::path& patch_path) { return fs::path(patch_path.string() + ".json"); }

void save_patch(const Patch& patch, const fs::path& path) {
  if (patch.pixels.channels != 3 || patch.pixels.height != patch.pixels.width) {
    throw ShapeError("patch must be S x S x 3");
  }
  write_png(patch.pixels, path);
  json j{{"config_hash", patch.config_hash},
         {"iterations", patch.iterations},
         {"patch_size", patch.size()},
         {"final_losses", patch.final_losses}};
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  if (!out) throw IoError("cannot write " + sidecar_path(path).string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + sidecar_path(path).string());
}

PatchLoadResult load_patch(const fs::path& path, const std::optional<std::string>& expected_hash) {
  PatchLoadResult r;
  r.patch.pixels = read_png(path);
  if (r.patch.pixels.channels != 3 || r.patch.pixels.height != r.patch.pixels.width) {
    throw FormatError(path.string() + ": a patch must be a square RGB image");
  }
  const fs::path side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) {
    r.warnings.push_back("sidecar " + side.string() + " not found; provenance unknown");
    return r;
  }
  r.sidecar_found = true;
  json j;
  try {
    j = json::parse(in);
    r.patch.config_hash = j.at("config_hash").get<std::string>();
    r.patch.iterations = j.at("iterations").get<int>();
    if (j.contains("final_losses")) r.patch.final_losses = j.at("final_losses").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw FormatError(side.string() + ": malformed sidecar (" + e.what() + ")");
  }
  if (expected_hash && *expected_hash != r.patch.config_hash) {
    r.warnings.push_back("config hash mismatch: patch was trained with " + r.patch.config_hash +
                         ", current config is " + *expected_hash);
  }
  return r;
}

}  // namespace cdupatch
