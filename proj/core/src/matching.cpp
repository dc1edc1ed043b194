#include "resmatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace resmatch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

long long total_capacity(const Capacities& capacities) {
  long long s = 0;
  for (int c : capacities) s += c;
  return s;
}

/// Shortest-augmenting-path assignment on a square min-cost matrix, keeping
/// dual potentials feasible throughout: u[i] + v[j] <= cost(i,j) for every
/// pair, tight on matched pairs. Rows are inserted in index order and ties in
/// the search resolve to the lowest column index.
struct SquareSolution {
  std::vector<int> row_to_col;
  std::vector<double> u, v;
};

SquareSolution solve_square_min(const Matrix& cost) {
  const int m = cost.rows();
  SquareSolution out;
  out.row_to_col.assign(m, -1);
  out.u.assign(m, 0.0);
  out.v.assign(m, 0.0);
  if (m == 0) return out;

  std::vector<double> u(m + 1, 0.0), v(m + 1, 0.0), minv(m + 1, 0.0);
  std::vector<int> matched_row(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1, 0);

  for (int i = 1; i <= m; ++i) {
    matched_row[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      int i0 = matched_row[j0], j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[matched_row[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (matched_row[j0] != 0);
    do {
      int j1 = way[j0];
      matched_row[j0] = matched_row[j1];
      j0 = j1;
    } while (j0);
  }

  for (int j = 1; j <= m; ++j) {
    if (matched_row[j] > 0) out.row_to_col[matched_row[j] - 1] = j - 1;
  }
  for (int i = 0; i < m; ++i) out.u[i] = u[i + 1];
  for (int j = 0; j < m; ++j) out.v[j] = v[j + 1];
  return out;
}

struct PaddedSolve {
  BalancedInstance instance;
  std::vector<int> padded_location;  // per padded row, padded location index
  std::vector<double> refugee_price;  // per padded row, nonnegative
  std::vector<double> location_price;  // per padded location, nonnegative
};

/// Solves the balanced instance through slot expansion and converts the slot
/// potentials into nonnegative prices with tight assigned pairs. Location
/// prices are then reduced as far as feasibility allows, pushing certificate
/// mass onto refugee prices.
PaddedSolve solve_padded(const Matrix& weights, const Capacities& capacities) {
  PaddedSolve out;
  out.instance = pad_to_balanced(weights, capacities);
  const Matrix& w = out.instance.weights;
  const Capacities& caps = out.instance.capacities;
  const int m = w.rows();
  const int kp = static_cast<int>(caps.size());

  std::vector<int> slot_location;
  slot_location.reserve(m);
  for (int l = 0; l < kp; ++l) {
    for (int s = 0; s < caps[l]; ++s) slot_location.push_back(l);
  }

  Matrix cost(m, m);
  for (int i = 0; i < m; ++i) {
    for (int s = 0; s < m; ++s) cost(i, s) = -w(i, slot_location[s]);
  }
  SquareSolution sq = solve_square_min(cost);

  out.padded_location.assign(m, kUnassigned);
  out.refugee_price.assign(m, 0.0);
  out.location_price.assign(kp, -kInf);
  for (int i = 0; i < m; ++i) {
    out.padded_location[i] = slot_location[sq.row_to_col[i]];
    out.refugee_price[i] = -sq.u[i];
  }
  // Slot prices of one location agree at the optimum; the min keeps the
  // certificate on the feasible side of any rounding dust.
  std::vector<double> loc_price(kp, kInf);
  for (int s = 0; s < m; ++s) {
    loc_price[slot_location[s]] = std::min(loc_price[slot_location[s]], -sq.v[s]);
  }

  // Shift so both price vectors are nonnegative; sums u_i + v_l are invariant
  // and the balanced objective is unchanged.
  double shift = 0.0;
  if (m > 0) shift = *std::min_element(out.refugee_price.begin(), out.refugee_price.end());
  for (double& ui : out.refugee_price) ui -= shift;
  for (int l = 0; l < kp; ++l) {
    if (caps[l] > 0) out.location_price[l] = loc_price[l] + shift;
  }

  // Lower location prices to the feasibility boundary (raising the matched
  // refugees' prices in step). Keeps optimality and tightness; makes the
  // certificate independent of how padding distributed slack.
  for (int pass = 0; pass < kp + 1; ++pass) {
    bool changed = false;
    for (int l = 0; l < kp; ++l) {
      if (caps[l] == 0) continue;
      double delta = out.location_price[l];
      for (int i = 0; i < m; ++i) {
        if (out.padded_location[i] == l) continue;
        delta = std::min(delta, out.refugee_price[i] + out.location_price[l] - w(i, l));
      }
      if (delta > 0.0) {
        out.location_price[l] -= delta;
        for (int i = 0; i < m; ++i) {
          if (out.padded_location[i] == l) out.refugee_price[i] += delta;
        }
        changed = true;
      }
    }
    if (!changed) break;
  }

  // Zero-capacity locations never enter the slot problem; price them at the
  // cheapest feasible level (they carry no objective weight).
  for (int l = 0; l < kp; ++l) {
    if (caps[l] > 0) continue;
    double p = 0.0;
    for (int i = 0; i < m; ++i) p = std::max(p, w(i, l) - out.refugee_price[i]);
    out.location_price[l] = p;
  }
  return out;
}

}  // namespace

void validate_instance(const Matrix& weights, const Capacities& capacities) {
  if (weights.cols() != static_cast<int>(capacities.size())) {
    throw std::invalid_argument("matching: weights have " + std::to_string(weights.cols()) +
                                " columns but " + std::to_string(capacities.size()) +
                                " capacities were given");
  }
  for (int c : capacities) {
    if (c < 0) throw std::invalid_argument("matching: negative capacity");
  }
  for (double v : weights.data()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("matching: weights must be finite and nonnegative");
    }
  }
}

BalancedInstance pad_to_balanced(const Matrix& weights, const Capacities& capacities) {
  validate_instance(weights, capacities);
  BalancedInstance out;
  out.original_rows = weights.rows();
  out.original_cols = weights.cols();

  const long long cap_total = total_capacity(capacities);
  const int n = weights.rows();
  const int k = weights.cols();

  if (cap_total >= n) {
    const int m = static_cast<int>(cap_total);
    out.weights = Matrix(m, k, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) out.weights(i, j) = weights(i, j);
    }
    out.capacities = capacities;
  } else {
    out.weights = Matrix(n, k + 1, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) out.weights(i, j) = weights(i, j);
    }
    out.capacities = capacities;
    out.capacities.push_back(n - static_cast<int>(cap_total));
  }
  return out;
}

double assignment_objective(const Matrix& weights, const std::vector<int>& location) {
  double total = 0.0;
  for (size_t i = 0; i < location.size(); ++i) {
    if (location[i] != kUnassigned) total += weights(static_cast<int>(i), location[i]);
  }
  return total;
}

bool is_feasible(const std::vector<int>& location, const Matrix& weights,
                 const Capacities& capacities) {
  if (static_cast<int>(location.size()) != weights.rows()) return false;
  std::vector<int> load(capacities.size(), 0);
  for (int l : location) {
    if (l == kUnassigned) continue;
    if (l < 0 || l >= static_cast<int>(capacities.size())) return false;
    if (++load[l] > capacities[l]) return false;
  }
  return true;
}

std::pair<Assignment, DualSolution> solve_primal_dual(const Matrix& weights,
                                                      const Capacities& capacities) {
  PaddedSolve padded = solve_padded(weights, capacities);
  const int n = weights.rows();
  const int k = weights.cols();

  Assignment assignment;
  assignment.location.assign(n, kUnassigned);
  for (int i = 0; i < n; ++i) {
    int l = padded.padded_location[i];
    assignment.location[i] = (l < k) ? l : kUnassigned;
  }
  assignment.objective = assignment_objective(weights, assignment.location);

  DualSolution dual;
  dual.refugee_price.assign(padded.refugee_price.begin(), padded.refugee_price.begin() + n);
  dual.location_price.assign(padded.location_price.begin(), padded.location_price.begin() + k);
  double obj = 0.0;
  for (int i = 0; i < n; ++i) obj += dual.refugee_price[i];
  for (int l = 0; l < k; ++l) obj += capacities[l] * dual.location_price[l];
  dual.objective = obj;
  return {std::move(assignment), std::move(dual)};
}

Assignment solve_assignment(const Matrix& weights, const Capacities& capacities) {
  return solve_primal_dual(weights, capacities).first;
}

DualSolution solve_dual(const Matrix& weights, const Capacities& capacities) {
  return solve_primal_dual(weights, capacities).second;
}

DualityReport verify_duality(const Assignment& assignment, const DualSolution& dual,
                             const Matrix& weights, const Capacities& capacities) {
  validate_instance(weights, capacities);
  const int n = weights.rows();
  const int k = weights.cols();
  DualityReport report;

  double infeas = 0.0;
  for (int i = 0; i < n; ++i) infeas = std::max(infeas, -dual.refugee_price[i]);
  for (int l = 0; l < k; ++l) infeas = std::max(infeas, -dual.location_price[l]);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < k; ++l) {
      infeas = std::max(infeas,
                        weights(i, l) - dual.refugee_price[i] - dual.location_price[l]);
    }
  }
  report.max_dual_infeasibility = infeas;

  std::vector<int> load(k, 0);
  double slack = 0.0;
  for (int i = 0; i < n; ++i) {
    int l = assignment.location[i];
    if (l == kUnassigned) {
      // A positive refugee price on an unassigned row breaks slackness.
      slack = std::max(slack, std::abs(dual.refugee_price[i]));
      continue;
    }
    ++load[l];
    slack = std::max(slack, std::abs(dual.refugee_price[i] + dual.location_price[l] -
                                     weights(i, l)));
  }
  for (int l = 0; l < k; ++l) {
    if (load[l] < capacities[l]) slack = std::max(slack, std::abs(dual.location_price[l]));
  }
  report.max_slackness_violation = slack;

  report.duality_gap = std::abs(assignment_objective(weights, assignment.location) -
                                dual.objective);
  return report;
}

Assignment brute_force_assignment(const Matrix& weights, const Capacities& capacities) {
  validate_instance(weights, capacities);
  const int n = weights.rows();
  const int k = weights.cols();

  double nodes = 1.0;
  for (int i = 0; i < n; ++i) {
    nodes *= static_cast<double>(k + 1);
    if (nodes > 1e7) {
      throw std::invalid_argument(
          "brute_force_assignment: enumeration would exceed 1e7 nodes, refusing");
    }
  }

  Assignment best;
  best.location.assign(n, kUnassigned);
  best.objective = -kInf;

  std::vector<int> current(n, kUnassigned);
  Capacities remaining = capacities;

  // Depth-first in (refugee, location) order so the first maximizer found is
  // the lexicographically smallest, with kUnassigned ordered last.
  auto recurse = [&](auto&& self, int i, double total) -> void {
    if (i == n) {
      if (total > best.objective) {
        best.objective = total;
        best.location = current;
      }
      return;
    }
    for (int l = 0; l < k; ++l) {
      if (remaining[l] == 0) continue;
      --remaining[l];
      current[i] = l;
      self(self, i + 1, total + weights(i, l));
      current[i] = kUnassigned;
      ++remaining[l];
    }
    current[i] = kUnassigned;
    self(self, i + 1, total);
  };
  recurse(recurse, 0, 0.0);

  best.objective = assignment_objective(weights, best.location);
  return best;
}

}  // namespace resmatch
