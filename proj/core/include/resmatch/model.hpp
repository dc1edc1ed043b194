#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "resmatch/matching.hpp"
#include "resmatch/matrix.hpp"

namespace resmatch {

struct ModelConfig {
  int hidden_dim = 128;
  int encoder_layers = 2;
  int heads = 1;
  int input_width = 10;  // number of locations

  int ffn_width() const { return 4 * hidden_dim; }
};

/// Set-to-set residual corrector for prediction matrices: projects each
/// refugee's prediction row and the (shared) capacity vector into the hidden
/// space, runs encoder layers of self-attention over the pool (no positional
/// encoding, so refugee order is irrelevant), and projects back to one
/// correction per location. The output is the clamped sum input + correction.
class Model {
 public:
  Model(const ModelConfig& config, uint64_t seed);
  static Model zero_initialized(const ModelConfig& config);

  Matrix forward(const Matrix& predictions, const Capacities& capacities) const;

  const ModelConfig& config() const { return config_; }
  size_t parameter_count() const { return parameters_.size(); }
  std::span<double> parameters() { return parameters_; }
  std::span<const double> parameters() const { return parameters_; }

 private:
  ModelConfig config_;
  std::vector<double> parameters_;
};

/// One supervised example: predictions in, minimally-modified predictions out.
struct TrainItem {
  Matrix input;
  Matrix target;
  Capacities capacities;
};

/// Sum of squared entrywise differences between one prediction and target.
double quadratic_loss(const Matrix& prediction, const Matrix& target);

/// Batch loss, and (when `gradients` is non-null) its exact derivative with
/// respect to every parameter, accumulated by reverse sweep. Throws when an
/// activation goes non-finite, naming the stage.
double batch_loss(const Model& model, std::span<const TrainItem> batch,
                  std::vector<double>* gradients, int threads = 1);

struct TrainConfig {
  int batch_pools = 16;
  int epochs = 50;
  double learning_rate = 1e-3;
  double lr_decay = 0.9;       // exponential, per epoch
  double weight_decay = 0.01;  // decoupled
  uint64_t seed = 0;
  int threads = 1;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  Model model;               // parameters at the best validation epoch
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochStats> history;
  bool aborted = false;  // divergence guard tripped
};

/// Adaptive-moment training with decoupled weight decay and exponential
/// learning-rate decay. Returns the snapshot with minimal validation loss.
TrainResult train_model(Model model, const std::vector<TrainItem>& train_set,
                        const std::vector<TrainItem>& val_set, const TrainConfig& config);

struct CheckpointMeta {
  int epoch = 0;
  double val_loss = 0.0;
  uint64_t seed = 0;
  std::string config_hash;
};

void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta);
struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace resmatch
