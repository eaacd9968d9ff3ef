#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "cdupatch/errors.hpp"
#include "cdupatch/hashing.hpp"
#include "cdupatch/png_io.hpp"
#include "cdupatch/raster_plot.hpp"
#include "cdupatch/report.hpp"

namespace fs = std::filesystem;

namespace cdupatch::cli {
namespace {

void apply_common(RunConfig& cfg, const Overrides& o) {
  if (o.data_dir) cfg.data_dir = *o.data_dir;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.adapter_path) cfg.adapter_path = *o.adapter_path;
  if (o.detector_path) cfg.detector_path = *o.detector_path;
  if (o.patch_path) cfg.patch_path = *o.patch_path;
  if (o.threshold) cfg.eval.threshold = *o.threshold;
  if (!o.thresholds.empty()) cfg.thresholds = o.thresholds;
  if (o.split) cfg.eval_split = *o.split;
  if (o.ir_renderer) {
    if (*o.ir_renderer == "physics") cfg.eval.ir_renderer.kind = IrPatchRenderer::Kind::kPhysics;
    else if (*o.ir_renderer == "adapter") cfg.eval.ir_renderer.kind = IrPatchRenderer::Kind::kAdapter;
    else throw ParameterError("--ir-renderer must be 'physics' or 'adapter'");
  }
  if (o.multiscale_test) cfg.multiscale_test = true;
  if (o.raw_counting) cfg.eval.matched = false;
  if (!o.victims.empty()) cfg.victims.assign(o.victims.begin(), o.victims.end());
  if (!o.patches.empty()) cfg.patches.assign(o.patches.begin(), o.patches.end());
}

void apply_attack(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.attack.seed = *o.seed;
  if (o.iterations) cfg.attack.iterations = *o.iterations;
  if (o.patch_size) cfg.attack.patch_size = *o.patch_size;
  if (o.batch_size) cfg.attack.batch_size = *o.batch_size;
  if (o.learning_rate) cfg.attack.learning_rate = *o.learning_rate;
  if (o.no_adapter) cfg.attack.use_adapter = false;
  if (o.no_augmentation) cfg.attack.use_augmentation = false;
}

fs::path or_default(const fs::path& p, const RunConfig& cfg, const char* name) {
  return p.empty() ? cfg.out_dir / name : p;
}

void require_data_dir(const RunConfig& cfg) {
  if (!fs::is_directory(cfg.data_dir)) throw ParameterError("data directory not found: " + cfg.data_dir.string());
}

std::vector<ImagePair> load_split(const RunConfig& cfg, const std::string& split) {
  require_data_dir(cfg);
  return load_dataset(cfg.data_dir, split).pairs;
}

std::vector<ImagePair> eval_pairs(const RunConfig& cfg) {
  auto pairs = load_split(cfg, cfg.eval_split);
  if (cfg.multiscale_test) pairs = make_multiscale_split(pairs, cfg.attack.augmentation, cfg.attack.seed + 1);
  return pairs;
}

DetectorHandle require_detector(const RunConfig& cfg) {
  if (cfg.detector_path.empty()) throw ParameterError("no detector given (--detector or detector.path)");
  return load_detector(cfg.detector_path);
}

Patch require_patch(const RunConfig& cfg) {
  if (cfg.patch_path.empty()) throw ParameterError("no patch given (--patch or patch_path)");
  auto loaded = load_patch(cfg.patch_path);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  return std::move(loaded.patch);
}

std::string config_hash(const RunConfig& cfg) { return to_hex(fnv1a(nlohmann::json(cfg).dump())); }

// Keeps the adapter alive for as long as the eval options point at it.
struct EvalContext {
  std::optional<AdapterModel> adapter;
  EvalOptions opts;
};

EvalContext make_eval_context(const RunConfig& cfg) {
  EvalContext ctx{std::nullopt, cfg.eval};
  ctx.opts.ir_renderer.scene = cfg.synthetic.scene;
  ctx.opts.ir_renderer.camera = cfg.synthetic.camera;
  if (ctx.opts.ir_renderer.kind == IrPatchRenderer::Kind::kAdapter) {
    if (cfg.adapter_path.empty()) throw ParameterError("the adapter renderer needs --adapter");
    ctx.adapter = load_adapter(cfg.adapter_path);
  }
  return ctx;
}

void bind(EvalContext& ctx) { ctx.opts.ir_renderer.adapter = ctx.adapter ? &*ctx.adapter : nullptr; }

void print_reports(const std::string& label, const std::vector<AsrReport>& reps) {
  for (const auto& r : reps) {
    std::printf("%s %-8s threshold=%.2f n_clean=%d n_patch=%d asr=%.4f\n", label.c_str(), to_string(r.modality).c_str(),
                r.threshold, r.n_clean, r.n_patch, r.asr);
  }
}

}  // namespace

int gen_data(RunConfig& cfg, const Overrides& o) {
  apply_common(cfg, o);
  if (o.n_images) cfg.n_images = *o.n_images;
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  const auto manifests = gen_synthetic_dataset(cfg.n_images, cfg.synthetic, cfg.seed, cfg.data_dir);
  RunConfig echo = cfg;
  echo.out_dir = cfg.data_dir;
  echo_run_config(echo, "gen-data");
  for (const auto& m : manifests) std::printf("%s: %zu pairs\n", m.split.c_str(), m.ids.size());
  return 0;
}

int train_adapter(RunConfig& cfg, const Overrides& o) {
  apply_common(cfg, o);
  if (o.epochs) cfg.adapter.epochs = *o.epochs;
  if (o.seed) cfg.adapter.seed = *o.seed;
  cfg.validate();
  cfg.adapter_path = or_default(cfg.adapter_path, cfg, "adapter.cdua");
  const auto boards = load_split(cfg, "boards");
  if (boards.empty()) throw ParameterError("the boards split is empty");
  const PixelPairSet all = sample_pixel_pairs(boards, cfg.adapter_pixels, cfg.adapter.seed);
  const std::size_t n_hold = std::max<std::size_t>(1, std::size_t(all.size() * cfg.adapter_holdout_fraction));
  PixelPairSet train_set, held;
  for (std::size_t i = 0; i < all.size(); ++i) {
    PixelPairSet& dst = i + n_hold < all.size() ? train_set : held;
    dst.inputs.push_back(all.inputs[i]);
    dst.targets.push_back(all.targets[i]);
  }
  const auto result = cdupatch::train_adapter(train_set, cfg.adapter);
  const double mse = adapter_mse(result.model, held);
  fs::create_directories(cfg.adapter_path.parent_path().empty() ? "." : cfg.adapter_path.parent_path());
  save_adapter(result.model, cfg.adapter_path);
  echo_run_config(cfg, "train-adapter");
  std::printf("adapter: %s\nheld-out mse: %.6g\nblack->%.4f white->%.4f\n", cfg.adapter_path.c_str(), mse,
              result.model.predict({0, 0, 0}), result.model.predict({1, 1, 1}));
  return 0;
}

int train_detector(RunConfig& cfg, const Overrides& o) {
  apply_common(cfg, o);
  if (o.seed) cfg.detector.variant_seed = *o.seed;
  if (o.id) cfg.detector.id = *o.id;
  if (o.epochs) cfg.detector.epochs = *o.epochs;
  if (o.min_train_images) cfg.detector.min_train_images = *o.min_train_images;
  if (!o.widths.empty()) {
    if (o.widths.size() != 3) throw ParameterError("--widths takes exactly three values");
    std::copy(o.widths.begin(), o.widths.end(), cfg.detector.architecture.widths.begin());
  }
  cfg.detector.max_epochs = std::max(cfg.detector.max_epochs, cfg.detector.epochs);
  cfg.validate();
  cfg.detector_path = or_default(cfg.detector_path, cfg, "detector.cdud");
  const auto train = load_split(cfg, "train");
  const auto val = load_split(cfg, "val");
  const auto result = train_toy_detector(train, val, cfg.detector);
  fs::create_directories(cfg.detector_path.parent_path().empty() ? "." : cfg.detector_path.parent_path());
  save_detector(result.handle, cfg.detector_path);
  echo_run_config(cfg, "train-detector");
  std::printf("detector: %s\nepochs: %d\nrecall visible=%.4f infrared=%.4f\n", cfg.detector_path.c_str(),
              result.report.epochs_run, result.report.recall_visible, result.report.recall_infrared);
  return 0;
}

int train_patch(RunConfig& cfg, const Overrides& o) {
  apply_common(cfg, o);
  apply_attack(cfg, o);
  cfg.validate();
  cfg.patch_path = or_default(cfg.patch_path, cfg, "patch.png");
  const auto train = load_split(cfg, "train");
  const DetectorHandle victim = require_detector(cfg);
  std::optional<AdapterModel> adapter;
  if (cfg.attack.use_adapter) {
    if (cfg.adapter_path.empty()) throw ParameterError("use_adapter is on but no adapter was given (--adapter)");
    adapter = load_adapter(cfg.adapter_path);
  }
  const int every = std::max(1, cfg.attack.iterations / 10);
  const auto result = cdupatch::train_patch(train, victim, adapter ? &*adapter : nullptr, cfg.attack,
                                            [&](const IterationRecord& r, const Patch&) {
                                              if ((r.iteration + 1) % every == 0) {
                                                std::printf("iter %5d total=%.5f ap=%.5f tv=%.3f\n", r.iteration + 1,
                                                            r.total, r.ap, r.tv);
                                                std::fflush(stdout);
                                              }
                                            });
  fs::create_directories(cfg.patch_path.parent_path().empty() ? "." : cfg.patch_path.parent_path());
  save_patch(result.patch, cfg.patch_path);
  const fs::path hist = cfg.out_dir / "patch_history.csv";
  std::ofstream out(hist, std::ios::trunc);
  if (!out) throw IoError("cannot write " + hist.string());
  out << "iteration,total,tv,ap,ap_visible,ap_infrared,n_scores\n";
  for (const auto& r : result.history) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%zu\n", r.iteration, r.total, r.tv, r.ap, r.ap_visible,
                  r.ap_infrared, r.n_scores);
    out << buf;
  }
  echo_run_config(cfg, "train-patch");
  std::printf("patch: %s (hash %s)\n", cfg.patch_path.c_str(), result.patch.config_hash.c_str());
  return 0;
}

int eval(RunConfig& cfg, const Overrides& o) {
  apply_common(cfg, o);
  cfg.validate();
  const auto pairs = eval_pairs(cfg);
  const DetectorHandle victim = require_detector(cfg);
  const Patch patch = require_patch(cfg);
  EvalContext ctx = make_eval_context(cfg);
  bind(ctx);
  const auto reps = compute_asr(pairs, patch, victim, ctx.opts);
  std::vector<ReportEntry> entries;
  for (const auto& r : reps) entries.push_back({victim.id, r});
  const auto files = emit_report(entries, cfg.out_dir, "eval", config_hash(cfg));
  echo_run_config(cfg, "eval");
  print_reports(victim.id, reps);
  for (const auto& f : files.tables) std::printf("table: %s\n", f.c_str());
  return 0;
}

int sweep(RunConfig& cfg, const Overrides& o) {
  apply_common(cfg, o);
  cfg.validate();
  const auto pairs = eval_pairs(cfg);
  const DetectorHandle victim = require_detector(cfg);
  const Patch patch = require_patch(cfg);
  EvalContext ctx = make_eval_context(cfg);
  bind(ctx);
  const auto result = threshold_sweep(pairs, patch, victim, cfg.thresholds, ctx.opts);
  const auto files = emit_report(entries_from_sweep(victim.id, result), cfg.out_dir, "sweep", config_hash(cfg));
  echo_run_config(cfg, "sweep");
  for (const auto& reps : result.reports) print_reports(victim.id, reps);
  for (const auto& f : files.tables) std::printf("table: %s\n", f.c_str());
  for (const auto& f : files.plots) std::printf("plot: %s\n", f.c_str());
  return 0;
}

int transfer(RunConfig& cfg, const Overrides& o) {
  apply_common(cfg, o);
  cfg.validate();
  if (cfg.victims.size() < 2) throw ParameterError("transfer needs at least two victims (--victims)");
  if (cfg.patches.size() != cfg.victims.size()) throw ParameterError("give exactly one patch per victim (--patches)");
  const auto pairs = eval_pairs(cfg);
  std::vector<DetectorHandle> victims;
  std::map<std::string, Patch> patches;
  for (std::size_t i = 0; i < cfg.victims.size(); ++i) {
    victims.push_back(load_detector(cfg.victims[i]));
    if (patches.count(victims.back().id)) throw ParameterError("duplicate victim id '" + victims.back().id + "'");
    auto loaded = load_patch(cfg.patches[i]);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
    patches.emplace(victims.back().id, std::move(loaded.patch));
  }
  EvalContext ctx = make_eval_context(cfg);
  bind(ctx);
  const auto m = transfer_eval(pairs, patches, victims, ctx.opts);
  const auto files = emit_transfer_report(m, cfg.eval.threshold, cfg.out_dir, config_hash(cfg));
  echo_run_config(cfg, "transfer");
  for (std::size_t r = 0; r < m.victims.size(); ++r) {
    std::printf("%-12s", m.victims[r].c_str());
    for (double v : m.asr[r]) std::printf(" %8.4f", v);
    std::printf("\n");
  }
  for (const auto& f : files.tables) std::printf("table: %s\n", f.c_str());
  return 0;
}

int ablate(RunConfig& cfg, const Overrides& o) {
  apply_common(cfg, o);
  apply_attack(cfg, o);
  cfg.validate();
  const auto train = load_split(cfg, "train");
  const auto test = eval_pairs(cfg);
  const DetectorHandle victim = require_detector(cfg);
  if (cfg.adapter_path.empty()) throw ParameterError("ablate needs an adapter (--adapter)");
  const AdapterModel adapter = load_adapter(cfg.adapter_path);
  EvalContext ctx = make_eval_context(cfg);
  bind(ctx);
  const auto rows = ablation_suite(train, test, victim, adapter, cfg.attack, ctx.opts);
  std::vector<ReportEntry> entries;
  const std::vector<double> none;
  for (const auto& r : rows) {
    std::printf("%-18s visible=%.4f infrared=%.4f fused=%.4f\n", r.variant.c_str(), r.asr_visible, r.asr_infrared,
                r.asr_fused);
    const auto reps = compute_asr(test, r.patch, victim, ctx.opts);
    for (const auto& rep : reps) entries.push_back({r.variant, rep});
  }
  const auto files = emit_report(entries, cfg.out_dir, "ablation", config_hash(cfg));
  echo_run_config(cfg, "ablate");
  for (const auto& f : files.tables) std::printf("table: %s\n", f.c_str());
  return 0;
}

int render(RunConfig& cfg, const Overrides& o) {
  apply_common(cfg, o);
  cfg.validate();
  const int count = o.count.value_or(4);
  if (count < 1) throw ParameterError("--count must be positive");
  const auto pairs = eval_pairs(cfg);
  const Patch patch = require_patch(cfg);
  EvalContext ctx = make_eval_context(cfg);
  bind(ctx);
  const Image ir_patch = ctx.opts.ir_renderer.render(patch.pixels);
  const fs::path dir = cfg.out_dir / "render";
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  int written = 0;
  for (const auto& p : pairs) {
    if (written == count) break;
    if (p.boxes.empty()) continue;
    const ImagePair patched = apply_patch(p, patch.pixels, ir_patch, ctx.opts.coverage_cap);
    const fs::path file = dir / (p.id + ".png");
    write_png(plot::hstack({p.visible, patched.visible, p.infrared, patched.infrared}), file);
    std::printf("render: %s\n", file.c_str());
    ++written;
  }
  echo_run_config(cfg, "render");
  return 0;
}

}  // namespace cdupatch::cli
