// End-to-end acceptance run on the toy stack. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Usage: cdupatch_acceptance <work_dir>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "cdupatch/adversarial_losses.hpp"
#include "cdupatch/compositor.hpp"
#include "cdupatch/data_pipeline.hpp"
#include "cdupatch/eval_harness.hpp"
#include "cdupatch/hashing.hpp"
#include "cdupatch/ir_adapter.hpp"
#include "cdupatch/patch_trainer.hpp"
#include "cdupatch/run_config.hpp"
#include "cdupatch/thermal_model.hpp"
#include "cdupatch/toy_detector.hpp"

namespace fs = std::filesystem;
using namespace cdupatch;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  failures += !o.pass;
  std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), s);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

Image random_patch(int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  Image p(side, side, 3);
  for (double& v : p.data) v = u(rng);
  return p;
}

std::uint64_t pixel_hash(const Image& img) { return fnv1a_values<double>(img.data); }

// The designated attack run: defaults except a 32 px patch and 600 iterations so that the
// ordering experiments fit the CPU budget.
AttackConfig designated_attack() {
  AttackConfig cfg;
  cfg.patch_size = 32;
  cfg.iterations = 600;
  cfg.seed = 0;
  return cfg;
}

struct Stack {
  fs::path root;
  std::vector<ImagePair> train, val, boards;
  std::optional<AdapterModel> adapter;
  std::optional<DetectorHandle> victim_a, victim_b;
  std::optional<Patch> patch_a, patch_b;
};

int run_cli(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" + CDUPATCH_CLI + "' " + args + " >> cli.log 2>&1";
  return std::system(cmd.c_str());
}

std::uint64_t tree_checksum(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  std::uint64_t h = kFnvOffset;
  for (const auto& f : files) {
    h = fnv1a(f.string(), h);
    h = fnv1a(std::to_string(file_checksum((dir / f).string())), h);
  }
  return files.empty() ? 0 : h;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <work_dir>\n", argv[0]);
    return 2;
  }
  Stack st;
  st.root = argv[1];
  fs::remove_all(st.root);
  fs::create_directories(st.root);
  const EvalOptions opts;

  report(1, "thermal model exactness", [] {
    ThermalParams p;
    p.absorptivity = 0.9;
    const double t = surface_temperature(p);
    const double err = rel_error(t, 396.86703414333018529618947724, 0.0);
    p.absorptivity = 0.0;
    const double t0 = surface_temperature(p);
    return Outcome{err <= 1e-6 && t0 == 300.0, fmt("T=%.12f rel_err=%.2e, alpha=0 -> %.17g", t, err, t0)};
  });

  report(2, "loss oracles", [] {
    const double tv_const = tv_loss(Image(4, 4, 3, 0.37));
    Image step(2, 2, 1);
    step.at(0, 1) = step.at(1, 1) = 1.0;
    const double tv_step = tv_loss(step);
    const std::vector<double> s{0.8, 0.6};
    const double ap = ap_loss(s);
    const Image patch = random_patch(8, 3);
    const std::vector<double> sv{0.2, 0.9, 0.4}, si{0.7, 0.1};
    double worst = 0.0;
    for (auto [g, d] : {std::pair{0.0, 1.0}, {2.5, 1.0}, {1.0, 0.0}, {0.3, 2.0}}) {
      const double total = adv_loss(patch, sv, si, {g, d}).total;
      const double split = g * adv_loss(patch, sv, si, {1, 0}).total + d * adv_loss(patch, sv, si, {0, 1}).total;
      worst = std::max(worst, std::abs(total - split));
    }
    return Outcome{tv_const == 0.0 && tv_step == 2.0 && ap == 0.7 && worst <= 1e-12,
                   fmt("tv(const)=%g tv(step)=%.17g ap=%.17g linearity=%.2e", tv_const, tv_step, ap, worst)};
  });

  const RunConfig defaults;
  gen_synthetic_dataset(defaults.n_images, defaults.synthetic, 0, st.root / "data");
  st.train = load_dataset(st.root / "data", "train").pairs;
  st.val = load_dataset(st.root / "data", "val").pairs;
  st.boards = load_dataset(st.root / "data", "boards").pairs;

  report(4, "adapter fidelity", [&] {
    const PixelPairSet fit = sample_pixel_pairs(st.boards, 10000, 1);
    const PixelPairSet held = sample_pixel_pairs(st.boards, 2000, 2);
    st.adapter = train_adapter(fit, AdapterTrainingConfig{}).model;
    const double mse = adapter_mse(*st.adapter, held);
    const double black = st.adapter->predict({0, 0, 0}), white = st.adapter->predict({1, 1, 1});
    return Outcome{mse < 1e-3 && black > white, fmt("held-out mse=%.3g black=%.4f white=%.4f", mse, black, white)};
  });

  report(5, "compositing exactness", [] {
    const int h = 40, w = 50;
    Image scene(h, w, 3);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (double& v : scene.data) v = u(rng);
    const Image patch = random_patch(16, 6);
    const Placement pl = placement_from_bbox({10, 8, 38, 36}, 0.3);
    EotConfig eot;
    const TransformSample t = sample_transform(eot, 7, 0);
    const WarpResult wr = warp_patch(patch, pl, t, h, w);
    const Image out = composite(scene, wr.canvas, wr.mask);
    bool outside = true, inside = true;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          if (wr.mask.at(y, x)) inside &= out.at(y, x, c) == wr.canvas.at(y, x, c);
          else outside &= out.at(y, x, c) == scene.at(y, x, c);
        }
    Placement exact;
    exact.target_bbox = {5, 5, 21, 21};
    exact.patch_side = 16;
    exact.left = exact.top = 5;
    const WarpResult id = warp_patch(patch, exact, TransformSample::identity(), h, w);
    const Image pasted = composite(scene, id.canvas, id.mask);
    bool identity = id.mask.count() == 256;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 3; ++c) identity &= pasted.at(5 + y, 5 + x, c) == patch.at(y, x, c);
    return Outcome{outside && inside && identity,
                   fmt("mask-0 identical=%d mask-1 equals warp=%d identity paste exact=%d (covered %zu px)", outside,
                       inside, identity, wr.mask.count())};
  });

  report(6, "toy victim quality", [&] {
    DetectorTrainingConfig cfg;
    cfg.id = "A";
    const auto r = train_toy_detector(st.train, st.val, cfg);
    st.victim_a = r.handle;
    save_detector(r.handle, st.root / "victimA.cdud");
    const double rv = detection_recall(r.handle, st.val, Modality::kVisible);
    const double ri = detection_recall(r.handle, st.val, Modality::kInfrared);
    return Outcome{rv >= 0.9 && ri >= 0.9, fmt("recall visible=%.4f infrared=%.4f after %d epochs", rv, ri,
                                               r.report.epochs_run)};
  });

  report(3, "gradient correctness", [&] {
    if (!st.adapter || !st.victim_a) return Outcome{false, "needs the adapter and victim from criteria 4 and 6"};
    AttackConfig cfg = designated_attack();
    cfg.patch_size = 8;
    cfg.batch_size = 4;
    std::vector<ImagePair> storage;
    const auto batch = sample_batch(st.train, cfg, 0, storage);
    const PatchObjective obj(*st.victim_a, &*st.adapter, cfg);
    const Image patch = random_patch(8, 9);
    const auto v = obj.evaluate(patch, batch, true);
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<std::size_t> pick(0, patch.size() - 1);
    const double h = 1e-6;
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const std::size_t i = pick(rng);
      Image a = patch, b = patch;
      a.data[i] += h;
      b.data[i] -= h;
      const double fd = (obj.evaluate(a, batch, false).terms.total - obj.evaluate(b, batch, false).terms.total) / (2 * h);
      worst = std::max(worst, rel_error(v.gradient.data[i], fd, 1e-7));
    }
    return Outcome{worst <= 1e-3 && v.n_infrared > 0,
                   fmt("max rel err %.2e over 20 coordinates (%zu visible, %zu infrared scores)", worst, v.n_visible,
                       v.n_infrared)};
  });

  // Shared by criteria 7-10.
  const AttackConfig attack = designated_attack();
  auto train_against = [&](const DetectorHandle& victim) {
    return train_patch(st.train, victim, &*st.adapter, attack).patch;
  };

  report(7, "attack beats random and solid baselines", [&] {
    if (!st.adapter || !st.victim_a) return Outcome{false, "needs the adapter and victim from criteria 4 and 6"};
    st.patch_a = train_against(*st.victim_a);
    save_patch(*st.patch_a, st.root / "patchA.png");
    const auto opt = compute_asr(st.val, *st.patch_a, *st.victim_a, opts);
    const auto rnd = compute_asr(st.val, baseline_patch(BaselineKind::kRandom, attack.patch_size, 1), *st.victim_a, opts);
    bool pass = true;
    std::ostringstream d;
    for (int m = 0; m < 2; ++m) {
      double best_solid = -1.0;
      std::string best_name;
      for (const auto& [name, _] : solid_colors()) {
        const double a =
            compute_asr(st.val, baseline_patch(BaselineKind::kSolid, attack.patch_size, 0, name), *st.victim_a, opts)[m]
                .asr;
        if (a > best_solid) best_solid = a, best_name = name;
      }
      const bool ok = opt[m].asr >= rnd[m].asr + 0.20 && opt[m].asr > best_solid;
      pass &= ok;
      d << (m ? "; " : "") << to_string(opt[m].modality) << " optimized=" << fmt("%.3f", opt[m].asr)
        << " random=" << fmt("%.3f", rnd[m].asr) << " best solid(" << best_name << ")=" << fmt("%.3f", best_solid);
    }
    return Outcome{pass, d.str()};
  });

  // Not one of the criteria: the trainer's own premise, that the optimised patch lowers the
  // mean target score on held-out images below that of its initialisation.
  if (st.patch_a) {
    std::vector<BatchSample> held;
    for (const auto& p : st.val) {
      BatchSample b{&p, {}};
      for (const auto& lb : p.boxes) {
        try {
          b.targets.push_back({placement_from_bbox(lb.box, attack.coverage_cap), {}, {}});
        } catch (const std::exception&) {
        }
      }
      if (!b.targets.empty()) held.push_back(std::move(b));
    }
    const PatchObjective obj(*st.victim_a, &*st.adapter, attack);
    const double before = obj.evaluate(init_patch(attack).pixels, held, false).terms.ap;
    const double after = obj.evaluate(st.patch_a->pixels, held, false).terms.ap;
    std::printf("INFO held-out mean target score: init=%.4f optimized=%.4f (%s)\n", before, after,
                after < before ? "lower" : "not lower");
  }

  report(8, "ablation ordering", [&] {
    if (!st.adapter || !st.victim_a) return Outcome{false, "needs the adapter and victim from criteria 4 and 6"};
    const auto test = make_multiscale_split(st.val, attack.augmentation, attack.seed + 1);
    const auto rows = ablation_suite(st.train, test, *st.victim_a, *st.adapter, attack, opts);
    double full = 0, no_aug = 0, no_ada = 0;
    for (const auto& r : rows) {
      if (r.variant == "full") full = r.asr_infrared;
      else if (r.variant == "w/o augmentation") no_aug = r.asr_infrared;
      else if (r.variant == "w/o adapter") no_ada = r.asr_infrared;
    }
    return Outcome{full > no_aug && no_aug > no_ada && no_ada <= 0.5 * full,
                   fmt("infrared full=%.3f w/o-aug=%.3f w/o-ada=%.3f", full, no_aug, no_ada)};
  });

  report(9, "threshold sweep trend", [&] {
    if (!st.patch_a) return Outcome{false, "needs the patch from criterion 7"};
    const auto sweep = threshold_sweep(st.val, *st.patch_a, *st.victim_a, kDefaultThresholds, opts);
    bool consistent = true;
    for (std::size_t k = 0; k < sweep.thresholds.size(); ++k) {
      EvalOptions o = opts;
      o.threshold = sweep.thresholds[k];
      const auto single = compute_asr(st.val, *st.patch_a, *st.victim_a, o);
      for (int m = 0; m < 3; ++m) {
        consistent &= single[m].asr == sweep.reports[k][m].asr && single[m].n_clean == sweep.reports[k][m].n_clean &&
                      single[m].n_patch == sweep.reports[k][m].n_patch;
      }
    }
    bool trend = true;
    std::ostringstream d;
    for (int m = 0; m < 3; ++m) {
      const double lo = sweep.reports.front()[m].asr, hi = sweep.reports.back()[m].asr;
      trend &= hi >= lo;
      d << to_string(sweep.reports.front()[m].modality) << fmt(" %.3f->%.3f; ", lo, hi);
    }
    d << "sweep equals single calls=" << consistent;
    return Outcome{trend && consistent, d.str()};
  });

  report(10, "transfer sanity", [&] {
    if (!st.patch_a) return Outcome{false, "needs the patch from criterion 7"};
    DetectorTrainingConfig cfg;
    cfg.id = "B";
    cfg.variant_seed = 1;
    cfg.architecture.widths = {12, 16, 24};
    st.victim_b = train_toy_detector(st.train, st.val, cfg).handle;
    st.patch_b = train_against(*st.victim_b);
    const std::vector<DetectorHandle> victims{*st.victim_a, *st.victim_b};
    const std::map<std::string, Patch> patches{{"A", *st.patch_a}, {"B", *st.patch_b}};
    const auto m = transfer_eval(st.val, patches, victims, opts);
    bool off = true;
    std::ostringstream d;
    for (std::size_t col = 0; col < 2; ++col) {
      const double rnd =
          compute_asr(st.val, baseline_patch(BaselineKind::kRandom, attack.patch_size, 1), victims[col], opts)[2].asr;
      const double cell = m.cell(1 - col, col);
      off &= cell > rnd;
      d << m.victims[1 - col] << "->" << m.victims[col] << fmt("=%.3f (random %.3f); ", cell, rnd);
    }
    const Patch again = train_against(*st.victim_a);
    const auto m2 = transfer_eval(st.val, {{"A", again}, {"B", *st.patch_b}}, victims, opts);
    const bool repro = pixel_hash(again.pixels) == pixel_hash(st.patch_a->pixels) && m2.cell(0, 0) == m.cell(0, 0) &&
                       m2.cell(1, 1) == m.cell(1, 1);
    d << fmt("diagonal %.3f %.3f reproducible=%d", m.cell(0, 0), m.cell(1, 1), repro);
    return Outcome{off && repro, d.str()};
  });

  report(11, "end-to-end determinism", [&] {
    std::array<std::uint64_t, 2> patch_sums{}, report_sums{};
    for (int run = 0; run < 2; ++run) {
      const fs::path dir = st.root / ("cli" + std::to_string(run));
      fs::create_directories(dir);
      std::ofstream(dir / "run.json") << R"({
        "data_dir": "data", "out_dir": "out",
        "n_images": 60,
        "synthetic": {"image_size": 48, "board_count": 2},
        "adapter": {"epochs": 5, "pixels": 4000},
        "detector": {"widths": [4, 6, 6], "epochs": 3, "max_epochs": 3, "recall_target": 0.0, "min_train_images": 1},
        "attack": {"patch_size": 8, "iterations": 20, "batch_size": 4},
        "eval": {"threshold": 0.05, "matched": false}
      })";
      const std::string c = "--config run.json ";
      for (const std::string& step :
           {"gen-data --seed 3", "train-adapter --out out/adapter.cdua", "train-detector --out out/detector.cdud",
            "train-patch --detector out/detector.cdud --adapter out/adapter.cdua --out out/patch.png",
            "eval --detector out/detector.cdud --patch out/patch.png"}) {
        if (run_cli(dir, c + step) != 0) return Outcome{false, "cli step failed: " + step + " (see cli.log)"};
      }
      patch_sums[run] = file_checksum((dir / "out/patch.png").string()) ^ file_checksum((dir / "out/patch.png.json").string());
      report_sums[run] = tree_checksum(dir / "out", ".csv");
    }
    return Outcome{patch_sums[0] == patch_sums[1] && report_sums[0] == report_sums[1] && report_sums[0] != 0,
                   fmt("patch %s/%s report %s/%s", to_hex(patch_sums[0]).c_str(), to_hex(patch_sums[1]).c_str(),
                       to_hex(report_sums[0]).c_str(), to_hex(report_sums[1]).c_str())};
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
