#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resmatch/datagen.hpp"
#include "resmatch/model.hpp"

namespace resmatch {

/// Everything one experiment run needs, resolvable from a preset, a config
/// file (JSON or a flat TOML subset) and command-line overrides, in that
/// precedence order.
struct ExperimentConfig {
  uint64_t seed = 1;

  int train_pools = 200;
  int val_pools = 50;
  int test_pools = 50;
  int pool_size = 50;
  int locations = 10;

  double sigma2 = 0.001;
  RhoConfig rho;
  CapacityMode capacity_mode = CapacityMode::kShares;

  std::vector<double> noise_grid;    // default-policy shuffle ratios
  std::vector<double> beta_grid;     // classifier miscalibration levels
  std::vector<double> epsilon_grid;  // strict-margin candidates
  double epsilon = 1e-6;
  double beta = 0.6;  // the level targets and training use

  ModelConfig model;
  TrainConfig train;
  int runs = 5;  // training seeds per configuration

  std::string stats_dir = "data/stats";
  std::string output_dir = "runs/out";
  int threads = 0;  // 0 = hardware concurrency

  std::string stats_manifest() const { return stats_dir + "/manifest.json"; }
};

/// Built-in presets: "desk" (small, minutes on a laptop) and "paper"
/// (full-scale protocol; hours).
ExperimentConfig preset_config(const std::string& name);

/// Parses a config file by extension (.json, .toml) and overlays it onto the
/// given base. Unknown keys are rejected.
ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base);

/// Canonical serialization of the reproducibility-relevant fields; two
/// configs hash equal iff a pipeline run from them is byte-identical.
std::string config_canonical(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

DatasetConfig dataset_config(const ExperimentConfig& config);

}  // namespace resmatch
