#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "resmatch/inverse.hpp"
#include "resmatch/matching.hpp"
#include "resmatch/scm.hpp"

namespace resmatch {

/// Matching instance fixture: {"n", "k", "weights" (row-major), "capacities"}.
std::string instance_to_json(const Matrix& weights, const Capacities& capacities);
void instance_from_json(const std::string& text, Matrix* weights, Capacities* capacities);

/// One episode as a single JSON line (the dataset file format).
std::string episode_to_jsonl(const Episode& episode);
Episode episode_from_jsonl(const std::string& line);

std::vector<Episode> read_episodes(const std::string& path);
void write_episodes(const std::string& path, const std::vector<Episode>& episodes);

/// ModifiedPredictions: {"epsilon", "mask" [[i,l],...], "gbreve" (row-major)}.
std::string modified_to_json(const ModifiedPredictions& modified);

/// Input/target pair for the post-processing model, one JSON line each.
struct TrainingPair {
  double noise = 0.0;
  double beta = 0.0;
  double epsilon = 0.0;
  uint64_t episode_seed = 0;
  Capacities capacities;
  Matrix input;   // classifier predictions
  Matrix target;  // minimally modified predictions
  std::vector<std::pair<int, int>> mask;
};

std::string pair_to_jsonl(const TrainingPair& pair);
TrainingPair pair_from_jsonl(const std::string& line);
std::vector<TrainingPair> read_pairs(const std::string& path);
void write_pairs(const std::string& path, const std::vector<TrainingPair>& pairs);

/// FNV-1a over a canonical string; stamped into every artifact manifest so
/// stages refuse mismatched inputs.
uint64_t fnv1a64(const std::string& text);
std::string hash_hex(uint64_t hash);

}  // namespace resmatch
