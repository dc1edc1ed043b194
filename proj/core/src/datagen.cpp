#include "resmatch/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "resmatch/serialize.hpp"

namespace resmatch {

namespace {

constexpr double kMeanGuard = 1e-6;  // keeps group means strictly inside (0, 1)

double clamped_ratio(double numerator, double denominator, const std::string& cell,
                     std::vector<std::string>* clamped) {
  if (denominator <= 0.0) {
    throw std::runtime_error("marginal means: zero denominator at " + cell);
  }
  double v = numerator / denominator;
  if (v <= kMeanGuard || v >= 1.0 - kMeanGuard) {
    if (clamped) clamped->push_back(cell);
    v = std::clamp(v, kMeanGuard, 1.0 - kMeanGuard);
  }
  return v;
}

}  // namespace

LocationMarginals compute_marginal_means(const MarginalStats& stats, int location) {
  const int ages = static_cast<int>(domains::kAges.size());
  const int regions = static_cast<int>(domains::kRegions.size());
  const int edus = static_cast<int>(domains::kEducations.size());
  const int sexes = static_cast<int>(domains::kSexes.size());
  const double employment = stats.employment_fb[location];

  LocationMarginals out;
  for (int a = 0; a < ages; ++a) {
    out.by_age.push_back(clamped_ratio(
        stats.age_given_loc_w1[static_cast<size_t>(location) * ages + a] * employment,
        stats.marginal_age(location, a),
        stats.locations[location] + "/age=" + domains::kAges[a], &out.clamped));
  }
  for (int c = 0; c < regions; ++c) {
    out.by_origin.push_back(clamped_ratio(
        stats.origin_given_loc_w1_fb[static_cast<size_t>(location) * regions + c] * employment,
        stats.origin_given_loc_fb[static_cast<size_t>(location) * regions + c],
        stats.locations[location] + "/region=" + domains::kRegions[c], &out.clamped));
  }
  for (int e = 0; e < edus; ++e) {
    out.by_education.push_back(clamped_ratio(
        stats.edu_given_loc_w1_fb[static_cast<size_t>(location) * edus + e] * employment,
        stats.edu_given_loc_fb[static_cast<size_t>(location) * edus + e],
        stats.locations[location] + "/education=" + domains::kEducations[e], &out.clamped));
  }
  for (int s = 0; s < sexes; ++s) {
    out.by_sex.push_back(clamped_ratio(
        stats.sex_given_loc_w1[static_cast<size_t>(location) * sexes + s] * employment,
        stats.sex_given_loc_fb[static_cast<size_t>(location) * sexes + s],
        stats.locations[location] + "/sex=" + domains::kSexes[s], &out.clamped));
  }
  return out;
}

QpProblem build_mean_qp(const LocationMarginals& marginals, const MarginalStats& stats,
                        int location, const RhoConfig& rho,
                        std::vector<std::string>* relaxed_cells) {
  const int ages = static_cast<int>(domains::kAges.size());
  const int regions = static_cast<int>(domains::kRegions.size());
  const int edus = static_cast<int>(domains::kEducations.size());
  const int sexes = static_cast<int>(domains::kSexes.size());
  const int cells = ages * regions * edus * sexes;

  auto cell_index = [&](int a, int c, int e, int s) {
    return ((a * regions + c) * edus + e) * sexes + s;
  };

  const double wa = 1.0 / (regions * edus * sexes);
  const double wc = 1.0 / (ages * edus * sexes);
  const double we = 1.0 / (ages * regions * sexes);
  const double ws = 1.0 / (ages * regions * edus);

  QpProblem qp;
  const int coupling = ages + regions + edus + sexes;
  qp.p_diag.assign(cells, 2.0 * (wa + wc + we + ws));
  qp.q.assign(cells, 0.0);
  qp.a = Matrix(coupling + cells, cells, 0.0);
  qp.lb.assign(coupling + cells, 0.0);
  qp.ub.assign(coupling + cells, 0.0);

  for (int a = 0; a < ages; ++a) {
    for (int c = 0; c < regions; ++c) {
      for (int e = 0; e < edus; ++e) {
        for (int s = 0; s < sexes; ++s) {
          qp.q[cell_index(a, c, e, s)] =
              -2.0 * (wa * marginals.by_age[a] + wc * marginals.by_origin[c] +
                      we * marginals.by_education[e] + ws * marginals.by_sex[s]);
        }
      }
    }
  }

  // Aggregation rows: the population-weighted mean over the free features
  // must stay within (1 +- rho) of the corresponding marginal.
  int row = 0;
  for (int a = 0; a < ages; ++a, ++row) {
    for (int c = 0; c < regions; ++c) {
      double origin_share = stats.origin_given_loc_fb[static_cast<size_t>(location) * regions + c];
      for (int e = 0; e < edus; ++e) {
        for (int s = 0; s < sexes; ++s) {
          qp.a(row, cell_index(a, c, e, s)) = origin_share * stats.joint_es(location, e, s);
        }
      }
    }
    qp.lb[row] = marginals.by_age[a] * (1.0 - rho.age);
    qp.ub[row] = marginals.by_age[a] * (1.0 + rho.age);
  }
  for (int c = 0; c < regions; ++c, ++row) {
    for (int a = 0; a < ages; ++a) {
      for (int e = 0; e < edus; ++e) {
        for (int s = 0; s < sexes; ++s) {
          qp.a(row, cell_index(a, c, e, s)) = stats.joint_aes(location, a, e, s);
        }
      }
    }
    qp.lb[row] = marginals.by_origin[c] * (1.0 - rho.origin);
    qp.ub[row] = marginals.by_origin[c] * (1.0 + rho.origin);
  }
  for (int e = 0; e < edus; ++e, ++row) {
    for (int c = 0; c < regions; ++c) {
      double origin_share = stats.origin_given_loc_fb[static_cast<size_t>(location) * regions + c];
      for (int a = 0; a < ages; ++a) {
        for (int s = 0; s < sexes; ++s) {
          qp.a(row, cell_index(a, c, e, s)) = origin_share * stats.joint_as(location, a, s);
        }
      }
    }
    qp.lb[row] = marginals.by_education[e] * (1.0 - rho.education);
    qp.ub[row] = marginals.by_education[e] * (1.0 + rho.education);
  }
  for (int s = 0; s < sexes; ++s, ++row) {
    for (int c = 0; c < regions; ++c) {
      double origin_share = stats.origin_given_loc_fb[static_cast<size_t>(location) * regions + c];
      for (int a = 0; a < ages; ++a) {
        for (int e = 0; e < edus; ++e) {
          qp.a(row, cell_index(a, c, e, s)) = origin_share * stats.joint_ae(location, a, e);
        }
      }
    }
    qp.lb[row] = marginals.by_sex[s] * (1.0 - rho.sex);
    qp.ub[row] = marginals.by_sex[s] * (1.0 + rho.sex);
  }

  // Per-cell box: the band around the most and least optimistic marginal,
  // widened by rho.box. An inverted band (possible by construction) is
  // reported and swapped to the sane orientation.
  for (int a = 0; a < ages; ++a) {
    for (int c = 0; c < regions; ++c) {
      for (int e = 0; e < edus; ++e) {
        for (int s = 0; s < sexes; ++s) {
          int idx = cell_index(a, c, e, s);
          qp.a(row + idx, idx) = 1.0;
          double m[4] = {marginals.by_age[a], marginals.by_origin[c],
                         marginals.by_education[e], marginals.by_sex[s]};
          double hi_m = *std::max_element(m, m + 4);
          double lo_m = *std::min_element(m, m + 4);
          double lo = hi_m * (1.0 - rho.box);
          double hi = lo_m * (1.0 + rho.box);
          if (lo > hi) {
            if (relaxed_cells) {
              relaxed_cells->push_back(stats.locations[location] + "/" + domains::kAges[a] + "/" +
                                       domains::kRegions[c] + "/" + domains::kEducations[e] + "/" +
                                       domains::kSexes[s]);
            }
            lo = lo_m * (1.0 - rho.box);
            hi = hi_m * (1.0 + rho.box);
          }
          qp.lb[row + idx] = std::max(lo, kMeanGuard);
          qp.ub[row + idx] = std::min(hi, 1.0 - kMeanGuard);
        }
      }
    }
  }
  return qp;
}

namespace {

std::string constraint_name(int row) {
  const int ages = static_cast<int>(domains::kAges.size());
  const int regions = static_cast<int>(domains::kRegions.size());
  const int edus = static_cast<int>(domains::kEducations.size());
  const int sexes = static_cast<int>(domains::kSexes.size());
  if (row < ages) return "age=" + domains::kAges[row];
  row -= ages;
  if (row < regions) return "region=" + domains::kRegions[row];
  row -= regions;
  if (row < edus) return "education=" + domains::kEducations[row];
  row -= edus;
  if (row < sexes) return "sex=" + domains::kSexes[row];
  return "box cell " + std::to_string(row - sexes);
}

}  // namespace

GroupMeans solve_mean_qp(const LocationMarginals& marginals, const MarginalStats& stats,
                         int location, const RhoConfig& rho) {
  GroupMeans out;
  out.location = location;
  QpProblem qp = build_mean_qp(marginals, stats, location, rho, &out.relaxed_cells);

  QpOptions options;
  options.tolerance = 1e-8;
  QpSolution solution = solve_qp_admm(qp, options);
  if (!solution.converged) {
    solution = solve_qp_projected_gradient(qp, options);
  }
  if (solution.primal_residual > 1e-6) {
    // Identify the worst row for the error message.
    int worst = 0;
    double worst_violation = 0.0;
    for (int j = 0; j < qp.constraints(); ++j) {
      double ax = 0.0;
      for (int i = 0; i < qp.variables(); ++i) ax += qp.a(j, i) * solution.x[i];
      double v = std::max(qp.lb[j] - ax, ax - qp.ub[j]);
      if (v > worst_violation) {
        worst_violation = v;
        worst = j;
      }
    }
    throw std::runtime_error("group means: constraint system infeasible at " +
                             stats.locations[location] + ", violated constraint: " +
                             constraint_name(worst) + " by " + std::to_string(worst_violation));
  }
  if (!solution.converged) {
    throw std::runtime_error("group means: QP solver failed to reach tolerance at " +
                             stats.locations[location]);
  }
  out.mu = solution.x;
  out.solve_info = std::move(solution);
  return out;
}

BetaParams beta_params(double mean, double variance) {
  if (mean <= 0.0 || mean >= 1.0) {
    throw std::invalid_argument("beta_params: mean must lie strictly inside (0, 1)");
  }
  if (variance <= 0.0) throw std::invalid_argument("beta_params: variance must be positive");

  BetaParams out;
  double limit = mean * (1.0 - mean);
  if (variance >= limit) {
    variance = 0.99 * limit;
    out.variance_clamped = true;
  }
  double nu = limit / variance - 1.0;
  out.alpha = mean * nu;
  out.beta = (1.0 - mean) * nu;
  return out;
}

Capacities build_capacities(const MarginalStats& stats, int pool_size, CapacityMode mode) {
  const int k = stats.location_count();
  if (pool_size < 0) throw std::invalid_argument("build_capacities: negative pool size");
  Capacities caps(k, 0);
  if (mode == CapacityMode::kUniform || k == 0) {
    for (int l = 0; l < k; ++l) caps[l] = pool_size / k;
    for (int l = 0; l < pool_size % k; ++l) ++caps[l];
    return caps;
  }
  if (!stats.has_location_share()) {
    throw std::runtime_error(
        "build_capacities: stats file has no location_share table; use uniform capacities");
  }
  // Largest-remainder apportionment, ties to the lower index.
  std::vector<double> remainder(k);
  int assigned = 0;
  for (int l = 0; l < k; ++l) {
    double quota = stats.location_share[l] * pool_size;
    caps[l] = static_cast<int>(std::floor(quota));
    remainder[l] = quota - caps[l];
    assigned += caps[l];
  }
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int i = 0; i < pool_size - assigned; ++i) ++caps[order[i % k]];
  return caps;
}

Pool sample_pool(const std::vector<GroupMeans>& means, const MarginalStats& stats,
                 int pool_size, Capacities capacities, double sigma2, uint64_t seed) {
  const int k = stats.location_count();
  if (static_cast<int>(means.size()) != k) {
    throw std::invalid_argument("sample_pool: group means do not cover every location");
  }
  const int sexes = static_cast<int>(domains::kSexes.size());
  const int ages = static_cast<int>(domains::kAges.size());
  const int edus = static_cast<int>(domains::kEducations.size());

  Rng rng(seed);
  Pool pool;
  pool.seed = seed;
  pool.capacities = std::move(capacities);
  pool.profiles.resize(pool_size);
  pool.true_prob = Matrix(pool_size, k);
  pool.outcome = Matrix(pool_size, k);

  for (int i = 0; i < pool_size; ++i) {
    RefugeeProfile& profile = pool.profiles[i];
    int joint = rng.categorical(stats.origin_sex);
    profile.region = joint / sexes;
    profile.sex = joint % sexes;
    profile.age = rng.categorical(std::span<const double>(
        stats.age_given_origin.data() + static_cast<size_t>(profile.region) * ages, ages));
    profile.education = rng.categorical(std::span<const double>(
        stats.edu_given_origin.data() + static_cast<size_t>(profile.region) * edus, edus));

    for (int l = 0; l < k; ++l) {
      double mu = means[l].at(profile.age, profile.region, profile.education, profile.sex);
      BetaParams shape = beta_params(mu, sigma2);
      double p = rng.beta(shape.alpha, shape.beta);
      pool.true_prob(i, l) = p;
      pool.outcome(i, l) = rng.bernoulli(p) ? 1.0 : 0.0;
    }
  }
  return pool;
}

DatasetSummary generate_dataset(const DatasetConfig& config) {
  MarginalStats stats = load_marginal_tables(config.stats_manifest);
  if (stats.location_count() != config.locations) {
    throw std::runtime_error("generate_dataset: stats file covers " +
                             std::to_string(stats.location_count()) + " locations, config asks " +
                             std::to_string(config.locations));
  }
  std::vector<double> noise_grid = config.noise_grid;
  if (noise_grid.empty()) {
    for (int i = 0; i <= 8; ++i) noise_grid.push_back(i / 8.0);
  }

  std::vector<GroupMeans> means;
  means.reserve(stats.location_count());
  for (int l = 0; l < stats.location_count(); ++l) {
    means.push_back(solve_mean_qp(compute_marginal_means(stats, l), stats, l, config.rho));
  }
  Capacities capacities = build_capacities(stats, config.pool_size, config.capacity_mode);

  std::filesystem::create_directories(config.output_dir);
  DatasetSummary summary;
  const char* split_names[3] = {"train", "val", "test"};
  const int split_pools[3] = {config.train_pools, config.val_pools, config.test_pools};
  int* split_counts[3] = {&summary.train_episodes, &summary.val_episodes,
                          &summary.test_episodes};

  for (int split = 0; split < 3; ++split) {
    std::filesystem::path file =
        std::filesystem::path(config.output_dir) / (std::string(split_names[split]) + ".jsonl");
    std::ofstream out(file);
    if (!out) throw std::runtime_error("generate_dataset: cannot write " + file.string());
    for (int p = 0; p < split_pools[split]; ++p) {
      uint64_t pool_seed = derive_seed(config.seed, split + 1, p);
      Pool pool = sample_pool(means, stats, config.pool_size, capacities, config.sigma2,
                              pool_seed);
      for (size_t wi = 0; wi < noise_grid.size(); ++wi) {
        uint64_t episode_seed = derive_seed(config.seed, split + 1, p, 1000 + wi);
        Episode episode = make_episode(pool, noise_grid[wi], episode_seed);
        out << episode_to_jsonl(episode) << '\n';
        ++*split_counts[split];
      }
    }
    summary.files.push_back(file.string());
  }
  return summary;
}

}  // namespace resmatch
