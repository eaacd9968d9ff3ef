#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdupatch/data_pipeline.hpp"
#include "cdupatch/eval_harness.hpp"
#include "cdupatch/ir_adapter.hpp"
#include "cdupatch/patch_trainer.hpp"
#include "cdupatch/toy_detector.hpp"

namespace cdupatch {

/// Everything a CLI run needs. Every key is optional in the JSON form; unknown keys are
/// rejected. Command-line flags are applied on top of the loaded file.
struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;  // dataset generation
  int n_images = 750;
  SyntheticConfig synthetic;

  AdapterTrainingConfig adapter;
  int adapter_pixels = 10000;
  double adapter_holdout_fraction = 0.2;
  std::filesystem::path adapter_path;

  DetectorTrainingConfig detector;
  std::filesystem::path detector_path;

  AttackConfig attack;
  std::filesystem::path patch_path;

  EvalOptions eval;
  std::vector<double> thresholds = kDefaultThresholds;
  std::string eval_split = "val";
  bool multiscale_test = false;  // evaluate on originals plus their multi-scale crops

  std::vector<std::filesystem::path> victims;  // transfer: detector files
  std::vector<std::filesystem::path> patches;  // transfer: one patch per victim, same order

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Reads a JSON config file. IoError when unreadable, ParameterError when malformed.
RunConfig load_run_config(const std::filesystem::path& path);

/// Writes the resolved config as <out_dir>/<command>.config.json and returns the path.
std::filesystem::path echo_run_config(const RunConfig& cfg, const std::string& command);

}  // namespace cdupatch
