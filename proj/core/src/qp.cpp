#include "resmatch/qp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace resmatch {

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  }
  return out;
}

void check_problem(const QpProblem& p) {
  const int n = p.variables();
  const int m = p.constraints();
  if (static_cast<int>(p.q.size()) != n || p.a.cols() != n ||
      static_cast<int>(p.lb.size()) != m || static_cast<int>(p.ub.size()) != m) {
    throw std::invalid_argument("qp: inconsistent problem dimensions");
  }
  for (int j = 0; j < m; ++j) {
    if (p.lb[j] > p.ub[j]) throw std::invalid_argument("qp: empty constraint interval");
  }
  for (double d : p.p_diag) {
    if (d < 0.0) throw std::invalid_argument("qp: quadratic diagonal must be nonnegative");
  }
}

}  // namespace

double QpSolution::kkt_residual() const {
  return std::max({primal_residual, stationarity_residual, slackness_residual});
}

void qp_residuals(const QpProblem& problem, QpSolution& solution) {
  const int n = problem.variables();
  const int m = problem.constraints();
  Eigen::Map<const Eigen::VectorXd> x(solution.x.data(), n);
  Eigen::Map<const Eigen::VectorXd> y(solution.y.data(), m);
  Eigen::MatrixXd a = to_eigen(problem.a);

  Eigen::VectorXd ax = a * x;
  double primal = 0.0, slack = 0.0;
  for (int j = 0; j < m; ++j) {
    primal = std::max({primal, problem.lb[j] - ax(j), ax(j) - problem.ub[j]});
    // Multiplier sign convention: y > 0 pushes against the upper bound,
    // y < 0 against the lower bound.
    if (y(j) > 0.0) slack = std::max(slack, y(j) * std::abs(problem.ub[j] - ax(j)));
    if (y(j) < 0.0) slack = std::max(slack, -y(j) * std::abs(ax(j) - problem.lb[j]));
  }
  Eigen::VectorXd grad = a.transpose() * y;
  for (int i = 0; i < n; ++i) grad(i) += problem.p_diag[i] * x(i) + problem.q[i];

  solution.primal_residual = primal;
  solution.stationarity_residual = grad.cwiseAbs().maxCoeff();
  solution.slackness_residual = slack;
}

QpSolution solve_qp_admm(const QpProblem& problem, const QpOptions& options) {
  check_problem(problem);
  const int n = problem.variables();
  const int m = problem.constraints();

  Eigen::MatrixXd a = to_eigen(problem.a);
  Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(problem.q.data(), n);
  Eigen::VectorXd lb = Eigen::Map<const Eigen::VectorXd>(problem.lb.data(), m);
  Eigen::VectorXd ub = Eigen::Map<const Eigen::VectorXd>(problem.ub.data(), m);

  const double rho = options.rho;
  const double sigma = options.sigma;

  Eigen::MatrixXd normal = rho * (a.transpose() * a);
  for (int i = 0; i < n; ++i) normal(i, i) += problem.p_diag[i] + sigma;
  Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("qp: normal matrix factorization failed");
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = (a * x).cwiseMax(lb).cwiseMin(ub);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

  QpSolution solution;
  solution.x.assign(n, 0.0);
  solution.y.assign(m, 0.0);

  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::VectorXd rhs = sigma * x - q + a.transpose() * (rho * z - y);
    x = llt.solve(rhs);
    Eigen::VectorXd ax = a * x;
    Eigen::VectorXd z_next = (ax + y / rho).cwiseMax(lb).cwiseMin(ub);
    y += rho * (ax - z_next);
    z = z_next;

    if ((it + 1) % 25 == 0 || it + 1 == options.max_iterations) {
      Eigen::Map<Eigen::VectorXd>(solution.x.data(), n) = x;
      Eigen::Map<Eigen::VectorXd>(solution.y.data(), m) = y;
      qp_residuals(problem, solution);
      solution.iterations = it + 1;
      if (solution.kkt_residual() <= options.tolerance) {
        solution.converged = true;
        return solution;
      }
    }
  }
  solution.converged = solution.kkt_residual() <= options.tolerance;
  return solution;
}

QpSolution solve_qp_projected_gradient(const QpProblem& problem, const QpOptions& options) {
  check_problem(problem);
  const int n = problem.variables();
  const int m = problem.constraints();

  Eigen::MatrixXd a = to_eigen(problem.a);
  Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(problem.q.data(), n);
  Eigen::VectorXd lb = Eigen::Map<const Eigen::VectorXd>(problem.lb.data(), m);
  Eigen::VectorXd ub = Eigen::Map<const Eigen::VectorXd>(problem.ub.data(), m);

  // Identity rows act as the projection box; the remaining rows are enforced
  // through an augmented-Lagrangian penalty.
  std::vector<int> box_of(n, -1);
  std::vector<char> is_box(m, 0);
  for (int j = 0; j < m; ++j) {
    int nonzero = -1;
    bool identity = true;
    for (int i = 0; i < n; ++i) {
      double v = a(j, i);
      if (v == 0.0) continue;
      if (v != 1.0 || nonzero >= 0) {
        identity = false;
        break;
      }
      nonzero = i;
    }
    if (identity && nonzero >= 0 && box_of[nonzero] < 0) {
      box_of[nonzero] = j;
      is_box[j] = 1;
    }
  }

  double penalty = options.rho;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    double lo = box_of[i] >= 0 ? lb[box_of[i]] : 0.0;
    double hi = box_of[i] >= 0 ? ub[box_of[i]] : 1.0;
    x(i) = 0.5 * (lo + hi);
  }
  Eigen::VectorXd mult = Eigen::VectorXd::Zero(m);

  QpSolution solution;
  solution.x.assign(n, 0.0);
  solution.y.assign(m, 0.0);

  auto clamp_to_box = [&](Eigen::VectorXd& v) {
    for (int i = 0; i < n; ++i) {
      if (box_of[i] < 0) continue;
      v(i) = std::clamp(v(i), lb[box_of[i]], ub[box_of[i]]);
    }
  };

  const int outer = 60;
  const int inner = options.max_iterations / outer + 1;
  for (int round = 0; round < outer; ++round) {
    // Lipschitz bound for the augmented objective gradient.
    double lip = penalty * (a.transpose() * a).norm();
    for (int i = 0; i < n; ++i) lip = std::max(lip, problem.p_diag[i]);
    double step = 1.0 / std::max(lip, 1e-12);

    for (int it = 0; it < inner; ++it) {
      Eigen::VectorXd ax = a * x;
      Eigen::VectorXd viol = Eigen::VectorXd::Zero(m);
      for (int j = 0; j < m; ++j) {
        if (is_box[j]) continue;
        double shifted = ax(j) + mult(j) / penalty;
        double proj = std::clamp(shifted, lb[j], ub[j]);
        viol(j) = shifted - proj;
      }
      Eigen::VectorXd grad = a.transpose() * (penalty * viol);
      for (int i = 0; i < n; ++i) grad(i) += problem.p_diag[i] * x(i) + problem.q[i];
      x -= step * grad;
      clamp_to_box(x);
    }

    Eigen::VectorXd ax = a * x;
    for (int j = 0; j < m; ++j) {
      if (is_box[j]) continue;
      double shifted = ax(j) + mult(j) / penalty;
      double proj = std::clamp(shifted, lb[j], ub[j]);
      mult(j) += penalty * (ax(j) - proj);
    }

    Eigen::Map<Eigen::VectorXd>(solution.x.data(), n) = x;
    // Recover box multipliers from stationarity so the certificate is complete.
    Eigen::VectorXd y_full = mult;
    Eigen::VectorXd grad = a.transpose() * mult;
    for (int i = 0; i < n; ++i) {
      if (box_of[i] < 0) continue;
      y_full(box_of[i]) = -(problem.p_diag[i] * x(i) + problem.q[i] + grad(i));
    }
    Eigen::Map<Eigen::VectorXd>(solution.y.data(), m) = y_full;
    qp_residuals(problem, solution);
    solution.iterations = (round + 1) * inner;
    if (solution.kkt_residual() <= options.tolerance) {
      solution.converged = true;
      return solution;
    }
    penalty *= 2.0;
  }
  solution.converged = solution.kkt_residual() <= options.tolerance;
  return solution;
}

}  // namespace resmatch
