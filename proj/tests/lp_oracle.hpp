#pragma once

// Test-only oracles, independent of the library's solvers:
//  - a dense two-phase simplex for small LPs
//  - the minimal L1 prediction edit that makes a given assignment optimal,
//    posed directly as an LP over all feasible assignments.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "resmatch/matching.hpp"

namespace testutil {

/// minimize c'x  s.t.  G x >= h, x >= 0. Returns the optimal value.
/// Dense two-phase tableau simplex with Bland's rule; small inputs only.
inline double simplex_min(const std::vector<double>& c, const std::vector<std::vector<double>>& g,
                          const std::vector<double>& h) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(g.size());
  constexpr double kEps = 1e-9;

  // Equality form: rows with negative rhs are negated so the slack can start
  // basic; the rest get an artificial variable.
  std::vector<int> artificial_of(m, -1);
  int artificials = 0;
  for (int j = 0; j < m; ++j) {
    if (h[j] > kEps) artificial_of[j] = artificials++;
  }
  const int cols = n + m + artificials;  // x, slack, artificial
  std::vector<std::vector<double>> tab(m, std::vector<double>(cols + 1, 0.0));
  std::vector<int> basis(m);
  for (int j = 0; j < m; ++j) {
    double sign = (h[j] > kEps) ? 1.0 : -1.0;
    for (int i = 0; i < n; ++i) tab[j][i] = sign * g[j][i];
    tab[j][n + j] = -sign;  // surplus
    tab[j][cols] = sign * h[j];
    if (artificial_of[j] >= 0) {
      tab[j][n + m + artificial_of[j]] = 1.0;
      basis[j] = n + m + artificial_of[j];
    } else {
      basis[j] = n + j;
    }
  }

  auto run_phase = [&](const std::vector<double>& cost) -> double {
    std::vector<double> z(cols, 0.0);
    double value = 0.0;
    for (int it = 0; it < 100000; ++it) {
      // Reduced costs from the current basis.
      for (int i = 0; i < cols; ++i) {
        double acc = cost[i];
        for (int j = 0; j < m; ++j) acc -= cost[basis[j]] * tab[j][i];
        z[i] = acc;
      }
      int enter = -1;
      for (int i = 0; i < cols; ++i) {
        if (z[i] < -kEps) {
          enter = i;
          break;  // Bland: lowest index
        }
      }
      value = 0.0;
      for (int j = 0; j < m; ++j) value += cost[basis[j]] * tab[j][cols];
      if (enter < 0) return value;

      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int j = 0; j < m; ++j) {
        if (tab[j][enter] > kEps) {
          double ratio = tab[j][cols] / tab[j][enter];
          if (ratio < best_ratio - kEps ||
              (ratio < best_ratio + kEps && (leave < 0 || basis[j] < basis[leave]))) {
            best_ratio = ratio;
            leave = j;
          }
        }
      }
      if (leave < 0) throw std::runtime_error("simplex: unbounded");

      double pivot = tab[leave][enter];
      for (double& v : tab[leave]) v /= pivot;
      for (int j = 0; j < m; ++j) {
        if (j == leave || std::abs(tab[j][enter]) < 1e-14) continue;
        double factor = tab[j][enter];
        for (int i = 0; i <= cols; ++i) tab[j][i] -= factor * tab[leave][i];
      }
      basis[leave] = enter;
    }
    throw std::runtime_error("simplex: iteration limit");
  };

  if (artificials > 0) {
    std::vector<double> phase1(cols, 0.0);
    for (int i = n + m; i < cols; ++i) phase1[i] = 1.0;
    double infeas = run_phase(phase1);
    if (infeas > 1e-7) throw std::runtime_error("simplex: infeasible");
  }
  std::vector<double> phase2(cols, 0.0);
  for (int i = 0; i < n; ++i) phase2[i] = c[i];
  for (int i = n + m; i < cols; ++i) phase2[i] = 1e6;  // keep artificials out
  run_phase(phase2);
  double value = 0.0;
  for (int j = 0; j < m; ++j) {
    if (basis[j] >= n + m && tab[j][cols] > 1e-7) {
      throw std::runtime_error("simplex: artificial stuck in basis");
    }
    if (basis[j] < n) value += c[basis[j]] * tab[j][cols];
  }
  return value;
}

/// Enumerates every capacity-feasible assignment (kUnassigned allowed).
inline std::vector<std::vector<int>> all_feasible_assignments(int n,
                                                              const resmatch::Capacities& caps) {
  std::vector<std::vector<int>> out;
  std::vector<int> current(n, resmatch::kUnassigned);
  resmatch::Capacities remaining = caps;
  const int k = static_cast<int>(caps.size());
  auto recurse = [&](auto&& self, int i) -> void {
    if (i == n) {
      out.push_back(current);
      return;
    }
    for (int l = 0; l < k; ++l) {
      if (remaining[l] == 0) continue;
      --remaining[l];
      current[i] = l;
      self(self, i + 1);
      current[i] = resmatch::kUnassigned;
      ++remaining[l];
    }
    current[i] = resmatch::kUnassigned;
    self(self, i + 1);
  };
  recurse(recurse, 0);
  return out;
}

/// Minimal sum of |edits| to the weights under which `target` becomes an
/// optimal assignment. Brute force: one LP constraint per feasible rival.
inline double min_l1_edit_for_optimal(const resmatch::Matrix& weights,
                                      const resmatch::Capacities& caps,
                                      const std::vector<int>& target) {
  const int n = weights.rows();
  const int k = weights.cols();
  const int vars = 2 * n * k;  // raise and lower parts per entry

  auto value_of = [&](const std::vector<int>& a) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      if (a[i] != resmatch::kUnassigned) v += weights(i, a[i]);
    }
    return v;
  };
  const double target_value = value_of(target);

  std::vector<std::vector<double>> g;
  std::vector<double> h;
  for (const std::vector<int>& rival : all_feasible_assignments(n, caps)) {
    if (rival == target) continue;
    std::vector<double> row(vars, 0.0);
    for (int i = 0; i < n; ++i) {
      if (target[i] != resmatch::kUnassigned) {
        row[i * k + target[i]] += 1.0;                // raise part
        row[n * k + i * k + target[i]] -= 1.0;        // lower part
      }
      if (rival[i] != resmatch::kUnassigned) {
        row[i * k + rival[i]] -= 1.0;
        row[n * k + i * k + rival[i]] += 1.0;
      }
    }
    g.push_back(std::move(row));
    h.push_back(value_of(rival) - target_value);
  }
  std::vector<double> cost(vars, 1.0);
  return simplex_min(cost, g, h);
}

}  // namespace testutil
