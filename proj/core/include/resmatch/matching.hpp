#pragma once

#include <utility>
#include <vector>

#include "resmatch/matrix.hpp"

namespace resmatch {

/// Location slot for refugees left out when total capacity is short.
inline constexpr int kUnassigned = -1;

/// Tolerance for every optimality-certificate check.
inline constexpr double kCertTolerance = 1e-9;

using Capacities = std::vector<int>;

/// One location per refugee (or kUnassigned) plus the attained total weight.
struct Assignment {
  std::vector<int> location;
  double objective = 0.0;
};

/// Nonnegative price vectors certifying optimality: refugee_price[i] +
/// location_price[l] >= weight(i,l) everywhere, with equality on assigned
/// pairs, and objective equal to the primal optimum.
struct DualSolution {
  std::vector<double> refugee_price;
  std::vector<double> location_price;
  double objective = 0.0;
};

/// Instance padded so that the refugee count equals the total capacity:
/// zero-weight dummy refugees when capacity exceeds demand, one zero-weight
/// dummy location when demand exceeds capacity.
struct BalancedInstance {
  Matrix weights;
  Capacities capacities;
  int original_rows = 0;
  int original_cols = 0;

  bool is_dummy_row(int i) const { return i >= original_rows; }
  bool has_dummy_location() const { return static_cast<int>(capacities.size()) > original_cols; }
  int dummy_location() const { return has_dummy_location() ? original_cols : -1; }
};

struct DualityReport {
  double max_dual_infeasibility = 0.0;   // constraint or sign violations
  double max_slackness_violation = 0.0;  // tightness on assigned pairs, price on slack rows/columns
  double duality_gap = 0.0;              // |primal objective - dual objective|

  bool pass() const {
    return max_dual_infeasibility <= kCertTolerance &&
           max_slackness_violation <= kCertTolerance && duality_gap <= kCertTolerance;
  }
};

/// Throws std::invalid_argument unless weights is a finite nonnegative matrix
/// shaped consistently with capacities (one column per location).
void validate_instance(const Matrix& weights, const Capacities& capacities);

BalancedInstance pad_to_balanced(const Matrix& weights, const Capacities& capacities);

/// Exact maximum-weight capacitated assignment. Deterministic: refugees are
/// processed in index order and location ties resolve to the lowest index the
/// search reaches first.
Assignment solve_assignment(const Matrix& weights, const Capacities& capacities);

/// Optimal dual prices for the same instance (see DualSolution). Among
/// optimal certificates, mass is pushed from location prices onto refugee
/// prices so location prices are as small as the certificate allows.
DualSolution solve_dual(const Matrix& weights, const Capacities& capacities);

/// One solve producing both sides; cheaper than two calls and guarantees the
/// pair refers to the same optimum.
std::pair<Assignment, DualSolution> solve_primal_dual(const Matrix& weights,
                                                      const Capacities& capacities);

/// Checks the certificate rather than trusting it. Failures are reported, not
/// thrown.
DualityReport verify_duality(const Assignment& assignment, const DualSolution& dual,
                             const Matrix& weights, const Capacities& capacities);

/// Independent oracle: exhaustive enumeration over capacity-feasible maps
/// (including kUnassigned). Returns the lexicographically smallest maximizer,
/// with kUnassigned ordered after the real locations. Refuses instances whose
/// enumeration would exceed ~1e7 nodes.
Assignment brute_force_assignment(const Matrix& weights, const Capacities& capacities);

/// Total weight of an assignment, summed in refugee order; unassigned rows
/// contribute zero. Both solver and oracle report objectives through this so
/// equal assignments compare bit-equal.
double assignment_objective(const Matrix& weights, const std::vector<int>& location);

/// Capacity- and range-feasibility of a location vector for the instance.
bool is_feasible(const std::vector<int>& location, const Matrix& weights,
                 const Capacities& capacities);

}  // namespace resmatch
