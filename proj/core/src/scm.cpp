#include "resmatch/scm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace resmatch {

void validate_pool(const Pool& pool) {
  validate_instance(pool.true_prob, pool.capacities);
  if (!pool.true_prob.same_shape(pool.outcome)) {
    throw std::invalid_argument("pool: probability and outcome shapes differ");
  }
  if (!pool.profiles.empty() &&
      static_cast<int>(pool.profiles.size()) != pool.true_prob.rows()) {
    throw std::invalid_argument("pool: profile count differs from probability rows");
  }
  for (double p : pool.true_prob.data()) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("pool: probability outside [0, 1]");
  }
  for (double y : pool.outcome.data()) {
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("pool: outcomes must be 0/1");
  }
}

Assignment default_policy(const Pool& pool, double noise, Rng& rng) {
  validate_pool(pool);
  if (noise < 0.0 || noise > 1.0) {
    throw std::invalid_argument("default_policy: noise must lie in [0, 1]");
  }
  Assignment base = solve_assignment(pool.true_prob, pool.capacities);
  const int n = pool.size();
  const int shuffled = static_cast<int>(std::floor(noise * n));
  if (shuffled >= 2) {
    std::vector<int> chosen = rng.sample_without_replacement(n, shuffled);
    std::sort(chosen.begin(), chosen.end());
    std::vector<int> slots;
    slots.reserve(chosen.size());
    for (int i : chosen) slots.push_back(base.location[i]);
    rng.shuffle(slots);
    for (size_t j = 0; j < chosen.size(); ++j) base.location[chosen[j]] = slots[j];
  }
  base.objective = assignment_objective(pool.true_prob, base.location);
  return base;
}

Episode make_episode(Pool pool, double noise, uint64_t seed) {
  Rng rng(seed);
  Episode episode;
  episode.default_location = default_policy(pool, noise, rng).location;
  episode.realized.resize(pool.size());
  for (int i = 0; i < pool.size(); ++i) {
    int l = episode.default_location[i];
    episode.realized[i] = (l == kUnassigned) ? 0 : static_cast<int>(pool.outcome(i, l));
  }
  episode.noise = noise;
  episode.seed = seed;
  episode.pool = std::move(pool);
  return episode;
}

BiasedClassifier::BiasedClassifier(int location_count, double bias, Rng& rng)
    : location_count_(location_count), bias_(bias) {
  if (location_count <= 0 || location_count % 2 != 0) {
    throw std::invalid_argument("classifier: location count must be positive and even");
  }
  if (bias < 0.0 || bias >= 1.0) {
    throw std::invalid_argument("classifier: bias must lie in [0, 1)");
  }
  overestimated_ = rng.sample_without_replacement(location_count, location_count / 2);
  std::sort(overestimated_.begin(), overestimated_.end());
}

BiasedClassifier::BiasedClassifier(std::vector<int> overestimated, int location_count,
                                   double bias)
    : overestimated_(std::move(overestimated)), location_count_(location_count), bias_(bias) {
  if (location_count <= 0 || location_count % 2 != 0) {
    throw std::invalid_argument("classifier: location count must be positive and even");
  }
  if (static_cast<int>(overestimated_.size()) != location_count / 2) {
    throw std::invalid_argument("classifier: overestimated set must cover half the locations");
  }
  std::sort(overestimated_.begin(), overestimated_.end());
  for (int l : overestimated_) {
    if (l < 0 || l >= location_count) {
      throw std::invalid_argument("classifier: overestimated location out of range");
    }
  }
}

Matrix BiasedClassifier::predictions(const Pool& pool) const {
  if (pool.locations() != location_count_) {
    throw std::invalid_argument("classifier: pool has " + std::to_string(pool.locations()) +
                                " locations, classifier expects " +
                                std::to_string(location_count_));
  }
  std::vector<char> over(location_count_, 0);
  for (int l : overestimated_) over[l] = 1;
  Matrix g = pool.true_prob;
  for (int i = 0; i < g.rows(); ++i) {
    for (int l = 0; l < g.cols(); ++l) {
      g(i, l) *= over[l] ? (1.0 + bias_) : (1.0 - bias_);
    }
  }
  return g;
}

namespace {

void check_assignment(const Assignment& assignment, const Pool& pool) {
  if (!is_feasible(assignment.location, pool.true_prob, pool.capacities)) {
    throw std::invalid_argument("assignment is infeasible for this pool");
  }
}

}  // namespace

double expected_cf_utility(const Assignment& assignment, const Episode& episode) {
  check_assignment(assignment, episode.pool);
  double total = 0.0;
  for (int i = 0; i < episode.pool.size(); ++i) {
    int l = assignment.location[i];
    if (l == kUnassigned) continue;
    if (l == episode.default_location[i]) {
      total += episode.realized[i];
    } else {
      total += episode.pool.true_prob(i, l);
    }
  }
  return total;
}

double realized_utility(const Assignment& assignment, const Pool& pool) {
  check_assignment(assignment, pool);
  double total = 0.0;
  for (int i = 0; i < pool.size(); ++i) {
    int l = assignment.location[i];
    if (l != kUnassigned) total += pool.outcome(i, l);
  }
  return total;
}

bool is_pool_harmed(const Assignment& assignment, const Episode& episode) {
  return expected_cf_utility(assignment, episode) < episode.realized_total() - kHarmTolerance;
}

McEstimate mc_counterfactual_check(const Assignment& assignment, const Episode& episode,
                                   int samples, Rng& rng) {
  if (samples < 1) throw std::invalid_argument("mc_counterfactual_check: samples must be >= 1");
  check_assignment(assignment, episode.pool);

  double kept = 0.0;
  std::vector<std::pair<int, int>> moved;  // (refugee, new location)
  for (int i = 0; i < episode.pool.size(); ++i) {
    int l = assignment.location[i];
    if (l == kUnassigned) continue;
    if (l == episode.default_location[i]) {
      kept += episode.realized[i];
    } else {
      moved.emplace_back(i, l);
    }
  }

  KahanSum sum, sum_sq;
  for (int s = 0; s < samples; ++s) {
    double utility = kept;
    for (auto [i, l] : moved) {
      utility += rng.bernoulli(episode.pool.true_prob(i, l)) ? 1.0 : 0.0;
    }
    sum.add(utility);
    sum_sq.add(utility * utility);
  }
  McEstimate est;
  est.samples = samples;
  est.mean = sum.value() / samples;
  if (samples > 1) {
    double var = (sum_sq.value() - samples * est.mean * est.mean) / (samples - 1);
    est.stderror = std::sqrt(std::max(0.0, var) / samples);
  }
  return est;
}

}  // namespace resmatch
