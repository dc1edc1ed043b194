// Command-line front end for the resettlement-matching experiment pipeline:
//   generate -> make-targets -> train -> evaluate -> report
// Each stage writes its artifacts plus a manifest under --out and refuses
// inputs produced under a different configuration.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "resmatch/config.hpp"
#include "resmatch/experiment.hpp"

namespace {

using resmatch::ExperimentConfig;

struct CommonArgs {
  std::string preset = "desk";
  std::string config_file;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> stats_dir;
  std::optional<int> threads;
  std::optional<std::string> pools;  // "train,val,test"
  std::optional<int> pool_size;
  std::optional<int> locations;
  std::optional<double> sigma2;
  std::optional<double> rho_a, rho_c, rho_e, rho_s, rho_b;
  std::optional<double> epsilon;
  std::optional<double> beta;
  std::optional<int> runs;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--preset", args.preset, "Configuration preset: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--config", args.config_file, "Config file (JSON or flat TOML)");
  cmd->add_option("--seed", args.seed, "Experiment seed");
  cmd->add_option("--out", args.out, "Output directory for artifacts");
  cmd->add_option("--stats-dir", args.stats_dir, "Directory with the aggregate stats tables");
  cmd->add_option("--threads", args.threads, "Worker threads (0 = all cores)");
  cmd->add_option("--pools", args.pools, "Pool counts as train,val,test");
  cmd->add_option("--pool-size", args.pool_size, "Refugees per pool");
  cmd->add_option("--locations", args.locations, "Number of locations");
  cmd->add_option("--sigma2", args.sigma2, "Variance of the employment-probability sampler");
  cmd->add_option("--rho-a", args.rho_a, "Looseness of the age aggregation constraint");
  cmd->add_option("--rho-c", args.rho_c, "Looseness of the origin aggregation constraint");
  cmd->add_option("--rho-e", args.rho_e, "Looseness of the education aggregation constraint");
  cmd->add_option("--rho-s", args.rho_s, "Looseness of the sex aggregation constraint");
  cmd->add_option("--rho-b", args.rho_b, "Width of the per-cell mean box");
  cmd->add_option("--eps", args.epsilon, "Strictness margin for the modified predictions");
  cmd->add_option("--beta", args.beta, "Classifier miscalibration used for targets/training");
  cmd->add_option("--runs", args.runs, "Training runs (seeds) per configuration");
}

ExperimentConfig resolve(const CommonArgs& args) {
  ExperimentConfig config = resmatch::preset_config(args.preset);
  if (!args.config_file.empty()) {
    config = resmatch::load_config_file(args.config_file, config);
  }
  if (args.seed) config.seed = *args.seed;
  if (args.out) config.output_dir = *args.out;
  if (args.stats_dir) config.stats_dir = *args.stats_dir;
  if (args.threads) config.threads = *args.threads;
  if (args.pools) {
    int t, v, e;
    if (std::sscanf(args.pools->c_str(), "%d,%d,%d", &t, &v, &e) != 3) {
      throw std::runtime_error("--pools expects three comma-separated counts, e.g. 200,50,50");
    }
    config.train_pools = t;
    config.val_pools = v;
    config.test_pools = e;
  }
  if (args.pool_size) config.pool_size = *args.pool_size;
  if (args.locations) config.locations = *args.locations;
  if (args.sigma2) config.sigma2 = *args.sigma2;
  if (args.rho_a) config.rho.age = *args.rho_a;
  if (args.rho_c) config.rho.origin = *args.rho_c;
  if (args.rho_e) config.rho.education = *args.rho_e;
  if (args.rho_s) config.rho.sex = *args.rho_s;
  if (args.rho_b) config.rho.box = *args.rho_b;
  if (args.epsilon) config.epsilon = *args.epsilon;
  if (args.beta) config.beta = *args.beta;
  if (args.runs) config.runs = *args.runs;
  config.model.input_width = config.locations;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capacitated matching with counterfactual-harm guarantees"};
  app.require_subcommand(1);

  CommonArgs args;
  CLI::App* generate = app.add_subcommand("generate", "Sample pools and episode records");
  CLI::App* targets = app.add_subcommand("make-targets",
                                         "Build (prediction, modified-prediction) pairs");
  CLI::App* train = app.add_subcommand("train", "Train the post-processing model");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Run the policy comparison");
  CLI::App* report = app.add_subcommand("report", "Emit summary tables and scatter data");
  for (CLI::App* cmd : {generate, targets, train, evaluate, report}) add_common(cmd, args);

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig config = resolve(args);
    if (generate->parsed()) {
      auto out = resmatch::run_generate(config);
      std::cerr << "generate: " << out.dataset.train_episodes << "/" << out.dataset.val_episodes
                << "/" << out.dataset.test_episodes << " episodes (train/val/test) under "
                << config.output_dir << "/dataset\n";
    } else if (targets->parsed()) {
      auto out = resmatch::run_make_targets(config);
      std::cerr << "make-targets: " << out.train_pairs << " train and " << out.val_pairs
                << " val pairs\n";
    } else if (train->parsed()) {
      auto out = resmatch::run_train(config);
      std::cerr << "train: wrote " << out.checkpoint_paths.size() << " checkpoints\n";
    } else if (evaluate->parsed()) {
      auto out = resmatch::run_evaluate(config);
      std::cerr << "evaluate: metrics at " << out.metrics_path << "\n";
    } else if (report->parsed()) {
      auto out = resmatch::run_report(config);
      std::cerr << "report: summary at " << out.summary_path << "\n";
    }
  } catch (const std::exception& e) {
    nlohmann::json error = {{"error", {{"message", e.what()}}}};
    std::cout << error.dump() << std::endl;
    return 1;
  }
  return 0;
}
