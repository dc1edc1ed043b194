#include "resmatch/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "resmatch/datagen.hpp"
#include "resmatch/parallel.hpp"

namespace resmatch {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr uint64_t kClassifierSalt = 0xC1A551F1;
constexpr uint64_t kModelInitSalt = 0xA11CE;
constexpr uint64_t kTrainSalt = 0x5EED5;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void write_manifest(const std::string& path, const std::string& stage,
                    const ExperimentConfig& config, json extra) {
  extra["stage"] = stage;
  extra["config_hash"] = config_hash(config);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  out << extra.dump(2) << '\n';
}

json read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path + " (run the earlier stage first)");
  json j;
  in >> j;
  return j;
}

void check_manifest(const std::string& path, const ExperimentConfig& config) {
  json j = read_manifest(path);
  std::string have = j.value("config_hash", "");
  std::string want = config_hash(config);
  if (have != want) {
    throw std::runtime_error("manifest " + path + " was produced under config hash " + have +
                             " but the current config hashes to " + want);
  }
}

struct EpisodeEval {
  double noise = 0.0;
  int refugees = 0;
  double default_realized = 0.0;  // totals, not per refugee
  // Indexed as true_prob, predicted, modified.
  double cf[3] = {0, 0, 0};
  double realized[3] = {0, 0, 0};
  bool harmed[3] = {false, false, false};
  std::vector<double> learned_cf, learned_realized;
  std::vector<char> learned_harmed;
};

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

}  // namespace

std::vector<int> classifier_split(uint64_t seed, int locations) {
  Rng rng(derive_seed(seed, kClassifierSalt));
  BiasedClassifier classifier(locations, 0.0, rng);
  return classifier.overestimated();
}

EvaluationResult evaluate_policies(const std::vector<Episode>& episodes,
                                   const std::vector<int>& overestimated,
                                   const std::vector<double>& beta_grid, double epsilon,
                                   const std::vector<Model>& checkpoints, int threads) {
  if (episodes.empty()) throw std::invalid_argument("evaluate_policies: no episodes");
  if (beta_grid.empty()) throw std::invalid_argument("evaluate_policies: empty beta grid");
  const int locations = episodes.front().pool.locations();

  EvaluationResult result;
  for (double beta : beta_grid) {
    BiasedClassifier classifier(overestimated, locations, beta);
    std::vector<EpisodeEval> evals(episodes.size());

    parallel_for(episodes.size(), threads, [&](size_t idx) {
      const Episode& episode = episodes[idx];
      const Pool& pool = episode.pool;
      EpisodeEval& ev = evals[idx];
      ev.noise = episode.noise;
      ev.refugees = pool.size();
      ev.default_realized = episode.realized_total();

      Matrix g = classifier.predictions(pool);
      Assignment policies[3];
      policies[0] = solve_assignment(pool.true_prob, pool.capacities);
      policies[1] = solve_assignment(g, pool.capacities);
      ModifiedPredictions modified = modify_probabilities(g, episode.record(), epsilon);
      policies[2] = solve_assignment(modified.values, pool.capacities);

      for (int p = 0; p < 3; ++p) {
        ev.cf[p] = expected_cf_utility(policies[p], episode);
        ev.realized[p] = realized_utility(policies[p], pool);
        ev.harmed[p] = is_pool_harmed(policies[p], episode);
      }
      for (const Model& model : checkpoints) {
        Assignment a = solve_assignment(model.forward(g, pool.capacities), pool.capacities);
        ev.learned_cf.push_back(expected_cf_utility(a, episode));
        ev.learned_realized.push_back(realized_utility(a, pool));
        ev.learned_harmed.push_back(is_pool_harmed(a, episode));
      }
    });

    std::set<double> noise_levels;
    for (const EpisodeEval& ev : evals) noise_levels.insert(ev.noise);

    for (double noise : noise_levels) {
      std::vector<const EpisodeEval*> group;
      for (const EpisodeEval& ev : evals) {
        if (ev.noise == noise) group.push_back(&ev);
      }
      const double count = static_cast<double>(group.size());

      {
        MetricsRow row{"default", noise, beta};
        KahanSum util;
        for (const EpisodeEval* ev : group) util.add(ev->default_realized / ev->refugees);
        row.harm_pct = 0.0;
        row.mean_cf_utility = util.value() / count;
        row.mean_realized_utility = row.mean_cf_utility;
        result.rows.push_back(row);
      }
      const char* names[3] = {"true_prob", "predicted", "modified"};
      for (int p = 0; p < 3; ++p) {
        MetricsRow row{names[p], noise, beta};
        KahanSum cf, realized;
        int harmed = 0;
        for (const EpisodeEval* ev : group) {
          cf.add(ev->cf[p] / ev->refugees);
          realized.add(ev->realized[p] / ev->refugees);
          harmed += ev->harmed[p];
        }
        row.harm_pct = 100.0 * harmed / count;
        row.mean_cf_utility = cf.value() / count;
        row.mean_realized_utility = realized.value() / count;
        result.rows.push_back(row);
      }
      if (!checkpoints.empty()) {
        MetricsRow row{"learned", noise, beta};
        std::vector<double> run_harm, run_cf, run_realized;
        for (size_t r = 0; r < checkpoints.size(); ++r) {
          KahanSum cf, realized;
          int harmed = 0;
          for (const EpisodeEval* ev : group) {
            cf.add(ev->learned_cf[r] / ev->refugees);
            realized.add(ev->learned_realized[r] / ev->refugees);
            harmed += ev->learned_harmed[r];
          }
          run_harm.push_back(100.0 * harmed / count);
          run_cf.push_back(cf.value() / count);
          run_realized.push_back(realized.value() / count);
        }
        for (double v : run_harm) row.harm_pct += v;
        for (double v : run_cf) row.mean_cf_utility += v;
        for (double v : run_realized) row.mean_realized_utility += v;
        row.harm_pct /= static_cast<double>(run_harm.size());
        row.mean_cf_utility /= static_cast<double>(run_cf.size());
        row.mean_realized_utility /= static_cast<double>(run_realized.size());
        row.stddev_over_runs = sample_stddev(run_harm);
        result.rows.push_back(row);
      }

      int pool_index = 0;
      for (const EpisodeEval* ev : group) {
        PerPoolRow row;
        row.pool = pool_index++;
        row.noise = noise;
        row.beta = beta;
        row.default_realized = ev->default_realized / ev->refugees;
        row.gain_predicted = (ev->cf[1] - ev->default_realized) / ev->refugees;
        row.gain_modified = (ev->cf[2] - ev->default_realized) / ev->refugees;
        if (!ev->learned_cf.empty()) {
          double mean = 0.0;
          for (double v : ev->learned_cf) mean += v;
          mean /= static_cast<double>(ev->learned_cf.size());
          row.gain_learned = (mean - ev->default_realized) / ev->refugees;
        }
        result.per_pool.push_back(row);
      }
    }
  }
  return result;
}

double select_epsilon(const std::vector<std::pair<double, Model>>& candidates,
                      const std::vector<Episode>& val_episodes,
                      const std::vector<int>& overestimated, double beta, int threads) {
  if (candidates.empty()) throw std::invalid_argument("select_epsilon: empty candidate grid");
  if (val_episodes.empty()) throw std::invalid_argument("select_epsilon: no validation episodes");
  const int locations = val_episodes.front().pool.locations();
  BiasedClassifier classifier(overestimated, locations, beta);

  double best_eps = 0.0;
  double best_harm = std::numeric_limits<double>::infinity();
  for (const auto& [epsilon, model] : candidates) {
    std::vector<char> harmed(val_episodes.size(), 0);
    parallel_for(val_episodes.size(), threads, [&](size_t idx) {
      const Episode& episode = val_episodes[idx];
      Matrix g = classifier.predictions(episode.pool);
      Assignment a =
          solve_assignment(model.forward(g, episode.pool.capacities), episode.pool.capacities);
      harmed[idx] = is_pool_harmed(a, episode);
    });
    double harm = 0.0;
    for (char h : harmed) harm += h;
    harm /= static_cast<double>(val_episodes.size());
    // Strictly-better comparison plus ascending grid order means ties go to
    // the smaller epsilon.
    if (harm < best_harm || (harm == best_harm && epsilon < best_eps)) {
      best_harm = harm;
      best_eps = epsilon;
    }
  }
  return best_eps;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics: cannot write " + path);
  out << "policy,w,beta,harm_pct,mean_cf_utility,mean_realized_utility,stddev_over_runs\n";
  for (const MetricsRow& r : rows) {
    out << r.policy << ',' << fmt("%g", r.noise) << ',' << fmt("%g", r.beta) << ','
        << fmt("%.4f", r.harm_pct) << ',' << fmt("%.6f", r.mean_cf_utility) << ','
        << fmt("%.6f", r.mean_realized_utility) << ',' << fmt("%.4f", r.stddev_over_runs)
        << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics: cannot open " + path);
  std::vector<MetricsRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    MetricsRow r;
    std::getline(ss, r.policy, ',');
    std::getline(ss, field, ','); r.noise = std::stod(field);
    std::getline(ss, field, ','); r.beta = std::stod(field);
    std::getline(ss, field, ','); r.harm_pct = std::stod(field);
    std::getline(ss, field, ','); r.mean_cf_utility = std::stod(field);
    std::getline(ss, field, ','); r.mean_realized_utility = std::stod(field);
    std::getline(ss, field, ','); r.stddev_over_runs = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

void write_per_pool_csv(const std::string& path, const std::vector<PerPoolRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("per-pool: cannot write " + path);
  out << "pool,w,beta,default_realized,gain_predicted,gain_modified,gain_learned\n";
  for (const PerPoolRow& r : rows) {
    out << r.pool << ',' << fmt("%g", r.noise) << ',' << fmt("%g", r.beta) << ','
        << fmt("%.6f", r.default_realized) << ',' << fmt("%.6f", r.gain_predicted) << ','
        << fmt("%.6f", r.gain_modified) << ',' << fmt("%.6f", r.gain_learned) << '\n';
  }
}

std::vector<PerPoolRow> read_per_pool_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("per-pool: cannot open " + path);
  std::vector<PerPoolRow> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    PerPoolRow r;
    std::getline(ss, field, ','); r.pool = std::stoi(field);
    std::getline(ss, field, ','); r.noise = std::stod(field);
    std::getline(ss, field, ','); r.beta = std::stod(field);
    std::getline(ss, field, ','); r.default_realized = std::stod(field);
    std::getline(ss, field, ','); r.gain_predicted = std::stod(field);
    std::getline(ss, field, ','); r.gain_modified = std::stod(field);
    std::getline(ss, field, ','); r.gain_learned = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

GenerateOutput run_generate(const ExperimentConfig& config) {
  GenerateOutput out;
  out.dataset = generate_dataset(dataset_config(config));
  json extra;
  extra["episodes"] = {{"train", out.dataset.train_episodes},
                       {"val", out.dataset.val_episodes},
                       {"test", out.dataset.test_episodes}};
  extra["files"] = out.dataset.files;
  extra["overestimated_locations"] = classifier_split(config.seed, config.locations);
  out.manifest_path = config.output_dir + "/dataset/manifest.json";
  write_manifest(out.manifest_path, "generate", config, std::move(extra));
  return out;
}

TargetsOutput run_make_targets(const ExperimentConfig& config) {
  check_manifest(config.output_dir + "/dataset/manifest.json", config);
  fs::create_directories(config.output_dir + "/targets");

  BiasedClassifier classifier(classifier_split(config.seed, config.locations), config.locations,
                              config.beta);
  TargetsOutput out;
  const char* splits[2] = {"train", "val"};
  std::string paths[2];
  int counts[2] = {0, 0};
  for (int s = 0; s < 2; ++s) {
    std::vector<Episode> episodes =
        read_episodes(config.output_dir + "/dataset/" + splits[s] + ".jsonl");
    std::vector<TrainingPair> pairs(episodes.size());
    parallel_for(episodes.size(), config.threads, [&](size_t idx) {
      const Episode& episode = episodes[idx];
      TrainingPair& pair = pairs[idx];
      pair.noise = episode.noise;
      pair.beta = config.beta;
      pair.epsilon = config.epsilon;
      pair.episode_seed = episode.seed;
      pair.capacities = episode.pool.capacities;
      pair.input = classifier.predictions(episode.pool);
      ModifiedPredictions modified =
          modify_probabilities(pair.input, episode.record(), config.epsilon);
      pair.target = std::move(modified.values);
      pair.mask = std::move(modified.mask);
    });
    paths[s] = config.output_dir + "/targets/pairs_" + splits[s] + ".jsonl";
    write_pairs(paths[s], pairs);
    counts[s] = static_cast<int>(pairs.size());
  }
  out.train_pairs = counts[0];
  out.val_pairs = counts[1];
  out.train_path = paths[0];
  out.val_path = paths[1];

  json extra;
  extra["beta"] = config.beta;
  extra["epsilon"] = config.epsilon;
  extra["pairs"] = {{"train", out.train_pairs}, {"val", out.val_pairs}};
  write_manifest(config.output_dir + "/targets/manifest.json", "make-targets", config,
                 std::move(extra));
  return out;
}

TrainOutput run_train(const ExperimentConfig& config) {
  check_manifest(config.output_dir + "/targets/manifest.json", config);
  fs::create_directories(config.output_dir + "/models");

  auto to_items = [](std::vector<TrainingPair> pairs) {
    std::vector<TrainItem> items;
    items.reserve(pairs.size());
    for (TrainingPair& p : pairs) {
      items.push_back({std::move(p.input), std::move(p.target), std::move(p.capacities)});
    }
    return items;
  };
  std::vector<TrainItem> train_items =
      to_items(read_pairs(config.output_dir + "/targets/pairs_train.jsonl"));
  std::vector<TrainItem> val_items =
      to_items(read_pairs(config.output_dir + "/targets/pairs_val.jsonl"));

  ModelConfig model_config = config.model;
  model_config.input_width = config.locations;

  TrainOutput out;
  for (int run = 0; run < config.runs; ++run) {
    Model model(model_config, derive_seed(config.seed, kModelInitSalt, run));
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, kTrainSalt, run);
    tc.threads = config.threads;
    TrainResult result = train_model(std::move(model), train_items, val_items, tc);

    std::string log_path = config.output_dir + "/models/run_" + std::to_string(run) + "_log.csv";
    {
      std::ofstream log(log_path);
      log << "epoch,train_loss,val_loss,lr\n";
      for (const EpochStats& s : result.history) {
        log << s.epoch << ',' << fmt("%.9g", s.train_loss) << ',' << fmt("%.9g", s.val_loss)
            << ',' << fmt("%.9g", s.learning_rate) << '\n';
      }
    }
    out.log_paths.push_back(log_path);
    if (result.aborted) {
      out.any_aborted = true;
      throw std::runtime_error("training run " + std::to_string(run) +
                               " diverged (validation loss > 10x initial for 3 epochs); log at " +
                               log_path);
    }
    std::string ckpt_path = config.output_dir + "/models/run_" + std::to_string(run) + ".json";
    CheckpointMeta meta;
    meta.epoch = result.best_epoch;
    meta.val_loss = result.best_val_loss;
    meta.seed = derive_seed(config.seed, kModelInitSalt, run);
    meta.config_hash = config_hash(config);
    save_checkpoint(ckpt_path, result.model, meta);
    out.checkpoint_paths.push_back(ckpt_path);
  }

  json extra;
  extra["runs"] = config.runs;
  extra["checkpoints"] = out.checkpoint_paths;
  write_manifest(config.output_dir + "/models/manifest.json", "train", config, std::move(extra));
  return out;
}

EvaluateOutput run_evaluate(const ExperimentConfig& config) {
  check_manifest(config.output_dir + "/dataset/manifest.json", config);
  std::vector<Episode> episodes = read_episodes(config.output_dir + "/dataset/test.jsonl");

  std::vector<Model> checkpoints;
  std::string models_manifest = config.output_dir + "/models/manifest.json";
  if (fs::exists(models_manifest)) {
    check_manifest(models_manifest, config);
    json j = read_manifest(models_manifest);
    for (const auto& path : j["checkpoints"]) {
      LoadedCheckpoint loaded = load_checkpoint(path.get<std::string>());
      if (loaded.meta.config_hash != config_hash(config)) {
        throw std::runtime_error("checkpoint " + path.get<std::string>() +
                                 " carries a different config hash");
      }
      checkpoints.push_back(std::move(loaded.model));
    }
  }

  EvaluateOutput out;
  out.result = evaluate_policies(episodes, classifier_split(config.seed, config.locations),
                                 config.beta_grid, config.epsilon, checkpoints, config.threads);
  fs::create_directories(config.output_dir + "/metrics");
  out.metrics_path = config.output_dir + "/metrics/metrics.csv";
  out.per_pool_path = config.output_dir + "/metrics/per_pool.csv";
  write_metrics_csv(out.metrics_path, out.result.rows);
  write_per_pool_csv(out.per_pool_path, out.result.per_pool);

  json extra;
  extra["episodes"] = static_cast<int>(episodes.size());
  extra["checkpoints"] = static_cast<int>(checkpoints.size());
  write_manifest(config.output_dir + "/metrics/manifest.json", "evaluate", config,
                 std::move(extra));
  return out;
}

ReportOutput run_report(const ExperimentConfig& config) {
  check_manifest(config.output_dir + "/metrics/manifest.json", config);
  std::vector<MetricsRow> rows = read_metrics_csv(config.output_dir + "/metrics/metrics.csv");
  std::vector<PerPoolRow> pools = read_per_pool_csv(config.output_dir + "/metrics/per_pool.csv");
  fs::create_directories(config.output_dir + "/report");

  ReportOutput out;
  out.scatter_path = config.output_dir + "/report/scatter.csv";
  {
    std::ofstream scatter(out.scatter_path);
    scatter << "pool,w,beta,gain_predicted,gain_modified,gain_learned\n";
    for (const PerPoolRow& r : pools) {
      scatter << r.pool << ',' << fmt("%g", r.noise) << ',' << fmt("%g", r.beta) << ','
              << fmt("%.6f", r.gain_predicted) << ',' << fmt("%.6f", r.gain_modified) << ','
              << fmt("%.6f", r.gain_learned) << '\n';
    }
  }

  out.summary_path = config.output_dir + "/report/summary.md";
  std::ofstream md(out.summary_path);
  md << "# Evaluation summary\n";

  std::vector<double> betas;
  for (const MetricsRow& r : rows) {
    if (std::find(betas.begin(), betas.end(), r.beta) == betas.end()) betas.push_back(r.beta);
  }
  std::sort(betas.begin(), betas.end());

  auto emit_table = [&](const std::string& title, double beta, auto value_of,
                        const char* value_fmt) {
    std::vector<double> noises;
    std::vector<std::string> policies;
    for (const MetricsRow& r : rows) {
      if (r.beta != beta) continue;
      if (std::find(noises.begin(), noises.end(), r.noise) == noises.end()) {
        noises.push_back(r.noise);
      }
      if (std::find(policies.begin(), policies.end(), r.policy) == policies.end()) {
        policies.push_back(r.policy);
      }
    }
    std::sort(noises.begin(), noises.end());
    md << "\n## " << title << " (beta = " << fmt("%g", beta) << ")\n\n";
    md << "| policy |";
    for (double w : noises) md << " w=" << fmt("%g", w) << " |";
    md << "\n|---|";
    for (size_t i = 0; i < noises.size(); ++i) md << "---|";
    md << "\n";
    for (const std::string& policy : policies) {
      md << "| " << policy << " |";
      for (double w : noises) {
        bool found = false;
        for (const MetricsRow& r : rows) {
          if (r.beta == beta && r.policy == policy && r.noise == w) {
            md << ' ' << fmt(value_fmt, value_of(r)) << " |";
            found = true;
            break;
          }
        }
        if (!found) md << " - |";
      }
      md << "\n";
    }
  };

  for (double beta : betas) {
    emit_table("Pools harmed (%)", beta, [](const MetricsRow& r) { return r.harm_pct; }, "%.2f");
    emit_table("Mean expected counterfactual utility (per refugee)", beta,
               [](const MetricsRow& r) { return r.mean_cf_utility; }, "%.4f");
    emit_table("Mean realized utility (per refugee)", beta,
               [](const MetricsRow& r) { return r.mean_realized_utility; }, "%.4f");
  }
  md.close();

  json extra;
  extra["rows"] = static_cast<int>(rows.size());
  write_manifest(config.output_dir + "/report/manifest.json", "report", config, std::move(extra));
  return out;
}

}  // namespace resmatch
