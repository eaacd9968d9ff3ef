#include "cdupatch/run_config.hpp"

#include <fstream>
#include <set>

#include "cdupatch/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cdupatch {
namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ParameterError(where + " must be a JSON object");
  const std::set<std::string> k(known.begin(), known.end());
  for (const auto& [key, _] : j.items())
    if (!k.count(key)) throw ParameterError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError(std::string("config key '") + key + "' has the wrong type");
  }
}

void read_path(const json& j, const char* key, fs::path& out) {
  std::string s = out.string();
  read(j, key, s);
  out = s;
}

std::vector<std::string> path_strings(const std::vector<fs::path>& v) {
  std::vector<std::string> out;
  for (const auto& p : v) out.push_back(p.string());
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (n_images < 1) throw ParameterError("n_images must be at least 1");
  synthetic.validate();
  if (adapter.epochs < 1 || adapter.batch_size < 1 || !(adapter.learning_rate > 0)) {
    throw ParameterError("invalid adapter training settings");
  }
  if (adapter_pixels < 10) throw ParameterError("adapter.pixels must be at least 10");
  if (!(adapter_holdout_fraction > 0 && adapter_holdout_fraction < 1)) {
    throw ParameterError("adapter.holdout_fraction must lie in (0,1)");
  }
  attack.validate();
  if (!(eval.threshold >= 0 && eval.threshold <= 1)) throw ParameterError("eval.threshold must lie in [0,1]");
  if (!(eval.match_iou > 0 && eval.match_iou <= 1)) throw ParameterError("eval.match_iou must lie in (0,1]");
  if (thresholds.empty()) throw ParameterError("eval.thresholds must not be empty");
  for (double t : thresholds)
    if (!(t >= 0 && t <= 1)) throw ParameterError("eval.thresholds must lie in [0,1]");
  if (eval_split.empty()) throw ParameterError("eval.split must not be empty");
}

void to_json(json& j, const RunConfig& c) {
  const auto& s = c.synthetic;
  const auto& d = c.detector;
  j = json{
      {"data_dir", c.data_dir.string()},
      {"out_dir", c.out_dir.string()},
      {"seed", c.seed},
      {"n_images", c.n_images},
      {"synthetic",
       {{"image_size", s.image_size},
        {"min_vehicles", s.min_vehicles},
        {"max_vehicles", s.max_vehicles},
        {"min_size_fraction", s.min_size_fraction},
        {"max_size_fraction", s.max_size_fraction},
        {"val_fraction", s.val_fraction},
        {"min_absorptivity_contrast", s.min_absorptivity_contrast},
        {"achromatic_probability", s.achromatic_probability},
        {"board_count", s.board_count},
        {"max_distractors", s.max_distractors},
        {"irradiance", s.scene.irradiance},
        {"emissivity", s.scene.emissivity},
        {"ambient", s.scene.ambient},
        {"t_min", s.camera.t_min},
        {"t_max", s.camera.t_max},
        {"diffusion_sigma", s.camera.diffusion_sigma}}},
      {"adapter",
       {{"epochs", c.adapter.epochs},
        {"learning_rate", c.adapter.learning_rate},
        {"batch_size", c.adapter.batch_size},
        {"seed", c.adapter.seed},
        {"pixels", c.adapter_pixels},
        {"holdout_fraction", c.adapter_holdout_fraction},
        {"path", c.adapter_path.string()}}},
      {"detector",
       {{"id", d.id},
        {"variant_seed", d.variant_seed},
        {"widths", d.architecture.widths},
        {"size_reference", d.architecture.size_reference},
        {"epochs", d.epochs},
        {"max_epochs", d.max_epochs},
        {"batch_size", d.batch_size},
        {"learning_rate", d.learning_rate},
        {"recall_target", d.recall_target},
        {"min_train_images", d.min_train_images},
        {"augmentation_probability", d.augmentation_probability},
        {"positive_target", d.positive_target},
        {"occlusion_probability", d.occlusion_probability},
        {"occlusion_coverage", d.occlusion_coverage},
        {"path", c.detector_path.string()}}},
      {"attack", c.attack},
      {"patch_path", c.patch_path.string()},
      {"eval",
       {{"threshold", c.eval.threshold},
        {"thresholds", c.thresholds},
        {"matched", c.eval.matched},
        {"match_iou", c.eval.match_iou},
        {"nms_iou", c.eval.nms_iou},
        {"coverage_cap", c.eval.coverage_cap},
        {"ir_renderer", c.eval.ir_renderer.kind == IrPatchRenderer::Kind::kAdapter ? "adapter" : "physics"},
        {"split", c.eval_split},
        {"multiscale_test", c.multiscale_test}}},
      {"victims", path_strings(c.victims)},
      {"patches", path_strings(c.patches)},
  };
}

void from_json(const json& j, RunConfig& c) {
  reject_unknown(j,
                 {"data_dir", "out_dir", "seed", "n_images", "synthetic", "adapter", "detector", "attack",
                  "patch_path", "eval", "victims", "patches"},
                 "run config");
  read_path(j, "data_dir", c.data_dir);
  read_path(j, "out_dir", c.out_dir);
  read(j, "seed", c.seed);
  read(j, "n_images", c.n_images);
  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    reject_unknown(s,
                   {"image_size", "min_vehicles", "max_vehicles", "min_size_fraction", "max_size_fraction",
                    "val_fraction", "min_absorptivity_contrast", "achromatic_probability", "board_count", "max_distractors",
                    "irradiance", "emissivity", "ambient", "t_min", "t_max", "diffusion_sigma"},
                   "synthetic");
    auto& o = c.synthetic;
    read(s, "image_size", o.image_size);
    read(s, "min_vehicles", o.min_vehicles);
    read(s, "max_vehicles", o.max_vehicles);
    read(s, "min_size_fraction", o.min_size_fraction);
    read(s, "max_size_fraction", o.max_size_fraction);
    read(s, "val_fraction", o.val_fraction);
    read(s, "min_absorptivity_contrast", o.min_absorptivity_contrast);
    read(s, "achromatic_probability", o.achromatic_probability);
    read(s, "board_count", o.board_count);
    read(s, "max_distractors", o.max_distractors);
    read(s, "irradiance", o.scene.irradiance);
    read(s, "emissivity", o.scene.emissivity);
    read(s, "ambient", o.scene.ambient);
    read(s, "t_min", o.camera.t_min);
    read(s, "t_max", o.camera.t_max);
    read(s, "diffusion_sigma", o.camera.diffusion_sigma);
  }
  if (j.contains("adapter")) {
    const auto& a = j["adapter"];
    reject_unknown(a, {"epochs", "learning_rate", "batch_size", "seed", "pixels", "holdout_fraction", "path"},
                   "adapter");
    read(a, "epochs", c.adapter.epochs);
    read(a, "learning_rate", c.adapter.learning_rate);
    read(a, "batch_size", c.adapter.batch_size);
    read(a, "seed", c.adapter.seed);
    read(a, "pixels", c.adapter_pixels);
    read(a, "holdout_fraction", c.adapter_holdout_fraction);
    read_path(a, "path", c.adapter_path);
  }
  if (j.contains("detector")) {
    const auto& d = j["detector"];
    reject_unknown(d,
                   {"id", "variant_seed", "widths", "size_reference", "epochs", "max_epochs", "batch_size",
                    "learning_rate", "recall_target", "min_train_images", "augmentation_probability", "positive_target",
                    "occlusion_probability", "occlusion_coverage", "path"},
                   "detector");
    auto& o = c.detector;
    read(d, "id", o.id);
    read(d, "variant_seed", o.variant_seed);
    read(d, "widths", o.architecture.widths);
    read(d, "size_reference", o.architecture.size_reference);
    read(d, "epochs", o.epochs);
    read(d, "max_epochs", o.max_epochs);
    read(d, "batch_size", o.batch_size);
    read(d, "learning_rate", o.learning_rate);
    read(d, "recall_target", o.recall_target);
    read(d, "min_train_images", o.min_train_images);
    read(d, "augmentation_probability", o.augmentation_probability);
    read(d, "positive_target", o.positive_target);
    read(d, "occlusion_probability", o.occlusion_probability);
    read(d, "occlusion_coverage", o.occlusion_coverage);
    read_path(d, "path", c.detector_path);
  }
  if (j.contains("attack")) from_json(j["attack"], c.attack);
  read_path(j, "patch_path", c.patch_path);
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    reject_unknown(e,
                   {"threshold", "thresholds", "matched", "match_iou", "nms_iou", "coverage_cap", "ir_renderer",
                    "split", "multiscale_test"},
                   "eval");
    read(e, "threshold", c.eval.threshold);
    read(e, "thresholds", c.thresholds);
    read(e, "matched", c.eval.matched);
    read(e, "match_iou", c.eval.match_iou);
    read(e, "nms_iou", c.eval.nms_iou);
    read(e, "coverage_cap", c.eval.coverage_cap);
    std::string renderer = "physics";
    read(e, "ir_renderer", renderer);
    if (renderer == "physics") c.eval.ir_renderer.kind = IrPatchRenderer::Kind::kPhysics;
    else if (renderer == "adapter") c.eval.ir_renderer.kind = IrPatchRenderer::Kind::kAdapter;
    else throw ParameterError("eval.ir_renderer must be 'physics' or 'adapter'");
    read(e, "split", c.eval_split);
    read(e, "multiscale_test", c.multiscale_test);
  }
  std::vector<std::string> v;
  read(j, "victims", v);
  if (!v.empty()) c.victims.assign(v.begin(), v.end());
  v.clear();
  read(j, "patches", v);
  if (!v.empty()) c.patches.assign(v.begin(), v.end());
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParameterError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  RunConfig c;
  from_json(j, c);
  return c;
}

fs::path echo_run_config(const RunConfig& cfg, const std::string& command) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec || !fs::is_directory(cfg.out_dir)) throw IoError("cannot create output directory " + cfg.out_dir.string());
  const fs::path path = cfg.out_dir / (command + ".config.json");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << json(cfg).dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
  return path;
}

}  // namespace cdupatch
