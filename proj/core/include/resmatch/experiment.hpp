#pragma once

#include <optional>
#include <string>
#include <vector>

#include "resmatch/config.hpp"
#include "resmatch/model.hpp"
#include "resmatch/scm.hpp"
#include "resmatch/serialize.hpp"

namespace resmatch {

/// Policies compared on every test episode, named by what drives them.
inline const std::vector<std::string> kPolicyNames = {
    "default",    // the historical (noisy) placements themselves
    "true_prob",  // maximize the true employment probabilities
    "predicted",  // maximize the biased classifier's predictions
    "modified",   // maximize the hindsight minimally-modified predictions
    "learned",    // maximize the trained corrector's output
};

struct MetricsRow {
  std::string policy;
  double noise = 0.0;
  double beta = 0.0;
  double harm_pct = 0.0;                // % of test episodes harmed
  double mean_cf_utility = 0.0;         // per refugee
  double mean_realized_utility = 0.0;   // per refugee
  double stddev_over_runs = 0.0;        // of harm_pct; 0 for deterministic policies
};

struct PerPoolRow {
  int pool = 0;  // index within the (noise, beta) group
  double noise = 0.0;
  double beta = 0.0;
  double default_realized = 0.0;  // per refugee
  double gain_predicted = 0.0;    // cf utility minus default realized, per refugee
  double gain_modified = 0.0;
  double gain_learned = 0.0;  // averaged over checkpoints; 0 when none given
};

struct EvaluationResult {
  std::vector<MetricsRow> rows;
  std::vector<PerPoolRow> per_pool;
};

/// The classifier's overestimated-location split, drawn once per experiment
/// seed and shared by every stage.
std::vector<int> classifier_split(uint64_t seed, int locations);

/// Runs all five policies over the test episodes for every beta in the grid
/// and aggregates per (policy, noise, beta). The learned policy is evaluated
/// once per checkpoint and reported as the mean across checkpoints.
EvaluationResult evaluate_policies(const std::vector<Episode>& episodes,
                                   const std::vector<int>& overestimated,
                                   const std::vector<double>& beta_grid, double epsilon,
                                   const std::vector<Model>& checkpoints, int threads);

/// Smallest grid value whose learned policy harms the fewest validation
/// episodes; candidates pair each epsilon with the model trained on targets
/// built at that epsilon.
double select_epsilon(const std::vector<std::pair<double, Model>>& candidates,
                      const std::vector<Episode>& val_episodes,
                      const std::vector<int>& overestimated, double beta, int threads);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);
void write_per_pool_csv(const std::string& path, const std::vector<PerPoolRow>& rows);
std::vector<PerPoolRow> read_per_pool_csv(const std::string& path);

/// Pipeline stages behind the CLI subcommands. Every stage writes a manifest
/// carrying the config hash and refuses upstream artifacts whose hash
/// differs.
struct GenerateOutput {
  DatasetSummary dataset;
  std::string manifest_path;
};
GenerateOutput run_generate(const ExperimentConfig& config);

struct TargetsOutput {
  int train_pairs = 0;
  int val_pairs = 0;
  std::string train_path, val_path;
};
TargetsOutput run_make_targets(const ExperimentConfig& config);

struct TrainOutput {
  std::vector<std::string> checkpoint_paths;
  std::vector<std::string> log_paths;
  bool any_aborted = false;
};
TrainOutput run_train(const ExperimentConfig& config);

struct EvaluateOutput {
  std::string metrics_path;
  std::string per_pool_path;
  EvaluationResult result;
};
EvaluateOutput run_evaluate(const ExperimentConfig& config);

struct ReportOutput {
  std::string summary_path;
  std::string scatter_path;
};
ReportOutput run_report(const ExperimentConfig& config);

}  // namespace resmatch
