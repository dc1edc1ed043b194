#pragma once

#include <cstdlib>
#include <string>

#include "resmatch/inverse.hpp"
#include "resmatch/matching.hpp"
#include "resmatch/rng.hpp"

namespace testutil {

/// Random instance with weights on the 1/64 grid (exactly representable, so
/// equal-objective comparisons are exact) and small capacities.
struct GridInstance {
  resmatch::Matrix weights;
  resmatch::Capacities capacities;
};

inline GridInstance random_grid_instance(resmatch::Rng& rng, int max_n = 6, int max_k = 3,
                                         int max_cap = 2) {
  int n = 1 + rng.next_index(max_n);
  int k = 1 + rng.next_index(max_k);
  GridInstance inst;
  inst.weights = resmatch::Matrix(n, k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) inst.weights(i, j) = rng.next_index(129) / 64.0;
  }
  inst.capacities.resize(k);
  for (int j = 0; j < k; ++j) inst.capacities[j] = rng.next_index(max_cap + 1);
  return inst;
}

/// Instance with arbitrary doubles in [0, 1).
inline GridInstance random_dense_instance(resmatch::Rng& rng, int n, int k, int max_cap) {
  GridInstance inst;
  inst.weights = resmatch::Matrix(n, k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) inst.weights(i, j) = rng.next_double();
  }
  inst.capacities.resize(k);
  for (int j = 0; j < k; ++j) inst.capacities[j] = 1 + rng.next_index(max_cap);
  return inst;
}

/// Record with capacities summing exactly to n (the balanced setting the
/// experiment protocol uses) and a capacity-feasible default placement.
inline resmatch::RetroRecord random_balanced_record(resmatch::Rng& rng, int n, int k) {
  resmatch::RetroRecord record;
  record.capacities.assign(k, 0);
  std::vector<int> slots;
  for (int i = 0; i < n; ++i) {
    int l = rng.next_index(k);
    ++record.capacities[l];
    slots.push_back(l);
  }
  rng.shuffle(slots);
  record.default_location = slots;
  record.employed.resize(n);
  for (int i = 0; i < n; ++i) record.employed[i] = rng.bernoulli(0.5) ? 1 : 0;
  return record;
}

inline std::string source_dir() {
  const char* dir = std::getenv("RESMATCH_SOURCE_DIR");
  return dir ? dir : ".";
}

inline std::string stats_manifest() { return source_dir() + "/data/stats/manifest.json"; }

}  // namespace testutil
