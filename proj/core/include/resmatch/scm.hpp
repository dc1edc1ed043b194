#pragma once

#include <cstdint>
#include <vector>

#include "resmatch/inverse.hpp"
#include "resmatch/matching.hpp"
#include "resmatch/rng.hpp"

namespace resmatch {

/// Harm comparisons treat utilities within this slack as equal.
inline constexpr double kHarmTolerance = 1e-12;

/// Categorical features of one synthetic refugee; values index the domains in
/// stats.hpp (age group, region of origin, education level, sex).
struct RefugeeProfile {
  int age = 0;
  int region = 0;
  int education = 0;
  int sex = 0;
};

/// One simulated pool: true employment probabilities plus the pre-sampled
/// potential outcome for every refugee-location pair, so counterfactual
/// quantities are exact table lookups.
struct Pool {
  std::vector<RefugeeProfile> profiles;
  Matrix true_prob;  // n x k, entries in [0, 1]
  Matrix outcome;    // n x k, 0/1
  Capacities capacities;
  uint64_t seed = 0;

  int size() const { return true_prob.rows(); }
  int locations() const { return true_prob.cols(); }
};

void validate_pool(const Pool& pool);

/// A realized resettlement episode: the historical policy's placements and
/// the outcomes those placements produced.
struct Episode {
  Pool pool;
  std::vector<int> default_location;  // from the noisy default policy
  std::vector<int> realized;          // realized[i] = outcome(i, default_location[i])
  double noise = 0.0;                 // shuffle ratio the default policy used
  uint64_t seed = 0;

  RetroRecord record() const {
    return RetroRecord{default_location, realized, pool.capacities};
  }
  double realized_total() const {
    double s = 0.0;
    for (int y : realized) s += y;
    return s;
  }
};

/// Builds an episode by running the default policy at the given noise level
/// and reading off the realized outcomes.
Episode make_episode(Pool pool, double noise, uint64_t seed);

/// The historical placement policy: the optimal assignment under the true
/// probabilities with a ratio `noise` of the decisions shuffled among each
/// other. noise = 0 reproduces the optimum exactly.
Assignment default_policy(const Pool& pool, double noise, Rng& rng);

/// Systematically miscalibrated classifier: a fixed half of the locations is
/// overestimated by (1 + bias), the other half underestimated by (1 - bias).
/// The split is drawn once per experiment, not per pool.
class BiasedClassifier {
 public:
  BiasedClassifier(int location_count, double bias, Rng& rng);
  BiasedClassifier(std::vector<int> overestimated, int location_count, double bias);

  Matrix predictions(const Pool& pool) const;
  const std::vector<int>& overestimated() const { return overestimated_; }
  double bias() const { return bias_; }
  int location_count() const { return location_count_; }

 private:
  std::vector<int> overestimated_;  // sorted location indices
  int location_count_ = 0;
  double bias_ = 0.0;
};

/// Expected utility of re-running the recorded episode with assignment `a`:
/// refugees kept at their default location contribute their realized outcome,
/// moved refugees contribute their true probability at the new location,
/// unassigned refugees contribute zero. Rejects infeasible assignments.
double expected_cf_utility(const Assignment& assignment, const Episode& episode);

/// Total potential outcome along the assignment (a table lookup).
double realized_utility(const Assignment& assignment, const Pool& pool);

/// True iff the assignment's expected counterfactual utility falls strictly
/// below the episode's realized total.
bool is_pool_harmed(const Assignment& assignment, const Episode& episode);

struct McEstimate {
  double mean = 0.0;
  double stderror = 0.0;
  int samples = 0;
};

/// Monte-Carlo cross-check of expected_cf_utility: re-draws outcomes for the
/// moved refugees only and averages the resulting utilities.
McEstimate mc_counterfactual_check(const Assignment& assignment, const Episode& episode,
                                   int samples, Rng& rng);

}  // namespace resmatch
