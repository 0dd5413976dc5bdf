#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <functional>
#include <string>
#include <vector>

namespace portrisk {

/// Symmetric PSD operator given by its action x -> V x.
struct QuadraticOperator {
  using Apply = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& out)>;

  Eigen::Index dim = 0;
  Apply apply;
  /// Positive diagonal used to precondition iterative solves. Best choice is
  /// a D with V - D of low rank; empty means "use ones".
  Eigen::VectorXd diagonal_hint;

  static QuadraticOperator dense(Eigen::MatrixXd v);
};

struct LinearConstraint {
  Eigen::SparseVector<double> coeffs;
  double rhs = 0.0;

  static LinearConstraint dense(const Eigen::VectorXd& a, double rhs);
};

/// minimize x'Vx + c'x  s.t.  a_k.x = rhs_k,  g_j.x <= rhs_j,  lower <= x <= upper.
/// Bounds may be +-infinity.
struct QpProblem {
  QuadraticOperator quadratic;
  Eigen::VectorXd linear;
  std::vector<LinearConstraint> eq;
  std::vector<LinearConstraint> ineq;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

enum class QpStatus { Optimal, Infeasible, MaxIterations };

std::string to_string(QpStatus status);

struct SolverSettings {
  double tolerance = 1e-8;
  int max_iterations = 50000;
  bool record_trace = false;
};

struct QpTraceRow {
  int iteration = 0;
  double mu = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
};

struct QpSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  /// Max of primal violation, dual violation (stationarity and multiplier
  /// sign) and complementarity gap, all absolute.
  double kkt_residual = 0.0;
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  bool polished = false;

  // multipliers in the sign convention of the Lagrangian
  // x'Vx + c'x - y'(Ax - b) + zg'(Gx - h) - zl'(x - l) + zu'(x - u)
  Eigen::VectorXd y;
  Eigen::VectorXd z_ineq;
  Eigen::VectorXd z_lower;
  Eigen::VectorXd z_upper;

  std::vector<QpTraceRow> trace;
};

QpSolution solve_qp(const QpProblem& problem, const SolverSettings& settings = {});

/// KKT residual of a candidate primal-dual point (see QpSolution).
double kkt_residual(const QpProblem& problem, const QpSolution& point);

/// Max violation of the constraints at x.
double primal_violation(const QpProblem& problem, const Eigen::VectorXd& x);

/// minimize 1/2 y'Vy - sum log y_i  s.t.  0 < y <= upper.
///
/// Projected Newton on the self-concordant objective. On return every free
/// coordinate satisfies |y_i (Vy)_i - 1| <= tolerance and every coordinate at
/// the bound has (Vy)_i - 1/y_i <= tolerance / upper. Throws
/// NotPositiveDefiniteError (naming `model_name`) when a direction of
/// non-positive curvature of V is met, SolverError when iterations run out.
Eigen::VectorXd solve_quad_log(const QuadraticOperator& v, double upper,
                               const SolverSettings& settings = {},
                               const std::string& model_name = "quadratic");

/// Preconditioned conjugate gradients for H x = r with H symmetric positive
/// definite; `x` is the starting guess on entry and the solution on exit.
/// `curvature_ok(p, p'Hp)` is consulted for every search direction and may
/// abort the iteration by returning false.
struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool aborted = false;
};
using MatVec = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using CurvatureCheck = std::function<bool(const Eigen::VectorXd& p, double pHp)>;
CgResult conjugate_gradient(const MatVec& apply, const Eigen::VectorXd& precond_inverse,
                            const Eigen::VectorXd& rhs, Eigen::VectorXd& x, double rel_tol,
                            int max_iter, const CurvatureCheck& curvature_ok = {});

}  // namespace portrisk
