#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cdupatch/run_config.hpp"

namespace cdupatch::cli {

/// Flag values; an empty optional means "keep the config file's value".
struct Overrides {
  std::string config_path;
  std::optional<std::string> data_dir, out_dir, adapter_path, detector_path, patch_path, split, ir_renderer, id;
  std::optional<int> n_images, epochs, iterations, patch_size, batch_size, min_train_images, count;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold, learning_rate;
  std::vector<double> thresholds;
  std::vector<int> widths;
  std::vector<std::string> victims, patches;
  bool no_adapter = false, no_augmentation = false, raw_counting = false, multiscale_test = false;
};

using Command = int (*)(RunConfig&, const Overrides&);

int gen_data(RunConfig& cfg, const Overrides& o);
int train_adapter(RunConfig& cfg, const Overrides& o);
int train_detector(RunConfig& cfg, const Overrides& o);
int train_patch(RunConfig& cfg, const Overrides& o);
int eval(RunConfig& cfg, const Overrides& o);
int sweep(RunConfig& cfg, const Overrides& o);
int transfer(RunConfig& cfg, const Overrides& o);
int ablate(RunConfig& cfg, const Overrides& o);
int render(RunConfig& cfg, const Overrides& o);

}  // namespace cdupatch::cli
