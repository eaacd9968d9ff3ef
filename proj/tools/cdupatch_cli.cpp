// Command-line driver. Exit codes: 0 ok, 2 configuration error, 3 I/O or file-format
// error, 4 training or numeric failure, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>

#include "cdupatch/errors.hpp"
#include "commands.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kTraining = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace cdupatch;
  CLI::App app{"Colour-driven adversarial patches against visible and infrared detectors"};
  app.require_subcommand(1);
  cli::Overrides o;
  app.add_option("--config", o.config_path, "JSON run configuration");

  std::map<CLI::App*, cli::Command> commands;
  auto add = [&](const char* name, const char* help, cli::Command fn) {
    CLI::App* sub = app.add_subcommand(name, help);
    commands[sub] = fn;
    return sub;
  };
  auto data = [&](CLI::App* s) { s->add_option("--data", o.data_dir, "dataset root"); };
  auto out_dir = [&](CLI::App* s) { s->add_option("--out-dir", o.out_dir, "directory for reports and echoed config"); };
  auto eval_flags = [&](CLI::App* s) {
    data(s);
    out_dir(s);
    s->add_option("--detector", o.detector_path, "detector file");
    s->add_option("--patch", o.patch_path, "patch PNG");
    s->add_option("--adapter", o.adapter_path, "adapter file (for --ir-renderer adapter)");
    s->add_option("--split", o.split, "evaluation split (default val)");
    s->add_option("--ir-renderer", o.ir_renderer, "physics | adapter");
    s->add_option("--threshold", o.threshold, "score threshold (default 0.5)");
    s->add_flag("--raw", o.raw_counting, "count all detections, not only those matching ground truth");
    s->add_flag("--multiscale-test", o.multiscale_test, "add multi-scale crops of the split");
  };
  auto attack_flags = [&](CLI::App* s) {
    s->add_option("--seed", o.seed, "attack seed");
    s->add_option("--iterations", o.iterations, "optimisation steps");
    s->add_option("--patch-size", o.patch_size, "patch side in pixels");
    s->add_option("--batch-size", o.batch_size, "images per step");
    s->add_option("--lr", o.learning_rate, "learning rate");
    s->add_flag("--no-adapter", o.no_adapter, "drop the infrared branch from the loss");
    s->add_flag("--no-augmentation", o.no_augmentation, "disable multi-scale clipping");
  };

  auto* gen = add("gen-data", "generate a synthetic paired dataset", cli::gen_data);
  gen->add_option("--out", o.data_dir, "dataset root to create");
  gen->add_option("--n", o.n_images, "number of scenes");
  gen->add_option("--seed", o.seed, "generation seed");

  auto* ta = add("train-adapter", "fit the RGB to infrared adapter on the colour boards", cli::train_adapter);
  data(ta);
  out_dir(ta);
  ta->add_option("--out", o.adapter_path, "adapter file to write");
  ta->add_option("--epochs", o.epochs, "training epochs");
  ta->add_option("--seed", o.seed, "sampling and init seed");

  auto* td = add("train-detector", "train a toy dual-branch victim", cli::train_detector);
  data(td);
  out_dir(td);
  td->add_option("--out", o.detector_path, "detector file to write");
  td->add_option("--id", o.id, "victim id");
  td->add_option("--seed", o.seed, "variant seed");
  td->add_option("--widths", o.widths, "three layer widths")->expected(3);
  td->add_option("--epochs", o.epochs, "epochs before the first recall check");
  td->add_option("--min-train-images", o.min_train_images, "minimum training set size");

  auto* tp = add("train-patch", "optimise a patch against a victim", cli::train_patch);
  data(tp);
  out_dir(tp);
  tp->add_option("--detector", o.detector_path, "victim detector file");
  tp->add_option("--adapter", o.adapter_path, "adapter file");
  tp->add_option("--out", o.patch_path, "patch PNG to write");
  attack_flags(tp);

  auto* ev = add("eval", "attack success rate of a patch", cli::eval);
  eval_flags(ev);

  auto* sw = add("sweep", "attack success rate across score thresholds", cli::sweep);
  eval_flags(sw);
  sw->add_option("--thresholds", o.thresholds, "thresholds to evaluate");

  auto* tr = add("transfer", "cross-victim transfer matrix", cli::transfer);
  data(tr);
  out_dir(tr);
  tr->add_option("--victims", o.victims, "detector files");
  tr->add_option("--patches", o.patches, "one patch per victim, same order");
  tr->add_option("--threshold", o.threshold, "score threshold (default 0.5)");
  tr->add_option("--split", o.split, "evaluation split (default val)");
  tr->add_option("--ir-renderer", o.ir_renderer, "physics | adapter");

  auto* ab = add("ablate", "full vs without-adapter vs without-augmentation", cli::ablate);
  eval_flags(ab);
  attack_flags(ab);

  auto* rd = add("render", "write clean and patched image strips", cli::render);
  data(rd);
  out_dir(rd);
  rd->add_option("--patch", o.patch_path, "patch PNG");
  rd->add_option("--adapter", o.adapter_path, "adapter file (for --ir-renderer adapter)");
  rd->add_option("--split", o.split, "split to render (default val)");
  rd->add_option("--ir-renderer", o.ir_renderer, "physics | adapter");
  rd->add_option("--count", o.count, "number of images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
    for (const auto& [sub, fn] : commands)
      if (sub->parsed()) return fn(cfg, o);
    return kConfig;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kTraining;
  } catch (const ParameterError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const CapabilityError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const ProtocolError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}
