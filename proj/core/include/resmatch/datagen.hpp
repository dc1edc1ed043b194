#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resmatch/qp.hpp"
#include "resmatch/rng.hpp"
#include "resmatch/scm.hpp"
#include "resmatch/stats.hpp"

namespace resmatch {

/// Per-location employment means of the general population, one table per
/// feature. Cells that had to be clamped into (0, 1) are listed by name.
struct LocationMarginals {
  std::vector<double> by_age;        // one entry per age group
  std::vector<double> by_origin;     // one per region
  std::vector<double> by_education;  // one per education level
  std::vector<double> by_sex;        // one per sex
  std::vector<std::string> clamped;
};

LocationMarginals compute_marginal_means(const MarginalStats& stats, int location);

/// Looseness parameters of the group-mean reconstruction.
struct RhoConfig {
  double age = 0.5;
  double origin = 0.0;
  double education = 0.1;
  double sex = 0.0;
  double box = 0.6;
};

/// Employment mean per feature combination (age x origin x education x sex)
/// for one location, reconstructed from the marginals.
struct GroupMeans {
  int location = 0;
  std::vector<double> mu;  // [age][origin][education][sex]
  QpSolution solve_info;
  std::vector<std::string> relaxed_cells;  // cells whose empty box was widened

  double at(int age, int origin, int education, int sex) const {
    const int r = static_cast<int>(domains::kRegions.size());
    const int e = static_cast<int>(domains::kEducations.size());
    const int s = static_cast<int>(domains::kSexes.size());
    return mu[((static_cast<size_t>(age) * r + origin) * e + education) * s + sex];
  }
};

/// Dimensions and bound vectors of the reconstruction QP, exposed so the
/// constraint residuals can be audited independently of the solver.
QpProblem build_mean_qp(const LocationMarginals& marginals, const MarginalStats& stats,
                        int location, const RhoConfig& rho,
                        std::vector<std::string>* relaxed_cells = nullptr);

/// Solves the reconstruction QP for one location. Throws if the constraint
/// system is infeasible, naming the most violated constraint.
GroupMeans solve_mean_qp(const LocationMarginals& marginals, const MarginalStats& stats,
                         int location, const RhoConfig& rho);

struct BetaParams {
  double alpha = 0.0;
  double beta = 0.0;
  bool variance_clamped = false;
};

/// Moment-matching shape parameters for a Beta with the given mean and
/// variance. An infeasible variance is clamped to 0.99 * mean * (1 - mean).
BetaParams beta_params(double mean, double variance);

/// Capacity layout for a pool of n refugees: proportional to the ingested
/// allocation shares (largest-remainder rounding) or uniform. Either way the
/// capacities sum exactly to n.
enum class CapacityMode { kShares, kUniform };
Capacities build_capacities(const MarginalStats& stats, int pool_size, CapacityMode mode);

/// Draws one pool: features from the categorical cascade, per-location
/// employment probabilities from the matched Beta, potential outcomes from
/// independent Bernoulli draws.
Pool sample_pool(const std::vector<GroupMeans>& means, const MarginalStats& stats,
                 int pool_size, Capacities capacities, double sigma2, uint64_t seed);

struct DatasetConfig {
  uint64_t seed = 1;
  int train_pools = 200;
  int val_pools = 50;
  int test_pools = 50;
  int pool_size = 50;
  int locations = 10;
  double sigma2 = 0.001;
  RhoConfig rho;
  std::vector<double> noise_grid;  // default policy shuffle ratios
  CapacityMode capacity_mode = CapacityMode::kShares;
  std::string stats_manifest;
  std::string output_dir;
};

struct DatasetSummary {
  int train_episodes = 0;
  int val_episodes = 0;
  int test_episodes = 0;
  std::vector<std::string> files;
};

/// Generates the three split files (one JSON episode per line). Deterministic
/// given the seed; episode sub-seeds derive from (seed, split, pool, noise).
DatasetSummary generate_dataset(const DatasetConfig& config);

}  // namespace resmatch
