#pragma once

#include <string>
#include <vector>

#include "resmatch/matrix.hpp"

namespace resmatch {

/// Convex QP with a diagonal quadratic term:
///   minimize 1/2 x' diag(p) x + q' x   subject to  lb <= A x <= ub.
/// Box constraints go into A as identity rows; lb == ub encodes an equality.
struct QpProblem {
  std::vector<double> p_diag;
  std::vector<double> q;
  Matrix a;
  std::vector<double> lb, ub;

  int variables() const { return static_cast<int>(p_diag.size()); }
  int constraints() const { return a.rows(); }
};

struct QpOptions {
  int max_iterations = 20000;
  double rho = 1.0;      // constraint penalty
  double sigma = 1e-6;   // proximal regularization
  double tolerance = 1e-8;
};

struct QpSolution {
  std::vector<double> x;  // primal
  std::vector<double> y;  // constraint multipliers
  int iterations = 0;
  bool converged = false;
  double primal_residual = 0.0;      // max violation of lb <= Ax <= ub
  double stationarity_residual = 0.0;  // max |diag(p) x + q + A' y|
  double slackness_residual = 0.0;   // max |y_j| * distance to its active bound

  double kkt_residual() const;
};

/// Operator-splitting solver: alternates a regularized equality-constrained
/// minimization with projection onto the constraint box. The normal matrix is
/// factorized once per solve.
QpSolution solve_qp_admm(const QpProblem& problem, const QpOptions& options = {});

/// Fallback for the same problem class: projected gradient on the box rows
/// with an augmented-Lagrangian treatment of the coupling rows. Slower and
/// cruder; used when the splitting iteration fails to converge.
QpSolution solve_qp_projected_gradient(const QpProblem& problem, const QpOptions& options = {});

/// Residuals of a candidate solution against the problem's KKT system.
void qp_residuals(const QpProblem& problem, QpSolution& solution);

}  // namespace resmatch
