#include <cmath>
#include <limits>
#include <stdexcept>

#include "portrisk/errors.hpp"
#include "portrisk/qp.hpp"

namespace portrisk {
namespace {

double objective(const Eigen::VectorXd& y, const Eigen::VectorXd& vy) {
  return 0.5 * y.dot(vy) - y.array().log().sum();
}

}  // namespace

Eigen::VectorXd solve_quad_log(const QuadraticOperator& v, double upper,
                               const SolverSettings& settings, const std::string& model_name) {
  if (!(upper > 0.0)) throw std::invalid_argument("solve_quad_log: upper bound must be positive");
  if (!v.apply) throw std::invalid_argument("solve_quad_log: missing operator");
  const auto n = v.dim;
  if (n == 0) return {};
  const double tol = settings.tolerance;

  Eigen::VectorXd hint = Eigen::VectorXd::Zero(n);
  if (v.diagonal_hint.size() == n) hint = v.diagonal_hint.cwiseMax(0.0);

  // best multiple of the ones vector: c^2 1'V1 = n
  Eigen::VectorXd y = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd vy(n);
  v.apply(y, vy);
  const double quad = y.dot(vy);
  if (!(quad > 0.0)) throw NotPositiveDefiniteError(model_name);
  y.setConstant(std::min(upper, std::sqrt(static_cast<double>(n) / quad)));
  v.apply(y, vy);

  Eigen::VectorXd grad(n), step(n), trial(n), vtrial(n), vp(n);
  std::vector<bool> fixed(static_cast<std::size_t>(n));
  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    grad = vy - y.cwiseInverse();

    // a coordinate at the bound whose gradient pushes it further up stays put
    double stationarity = 0.0;
    Eigen::Index free_count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      fixed[i] = y(i) >= upper && grad(i) <= 0.0;
      if (fixed[i]) {
        stationarity = std::max(stationarity, y(i) * grad(i) > tol ? y(i) * grad(i) : 0.0);
      } else {
        stationarity = std::max(stationarity, std::abs(y(i) * grad(i)));
        ++free_count;
      }
    }
    if (stationarity <= tol) return y;

    // Newton step on the free coordinates: (V + Diag(1/y^2)) p = -g
    const Eigen::VectorXd inv_y2 = y.cwiseInverse().cwiseAbs2();
    Eigen::VectorXd rhs(n), precond(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      rhs(i) = fixed[i] ? 0.0 : -grad(i);
      precond(i) = fixed[i] ? 1.0 : 1.0 / (hint(i) + inv_y2(i));
    }
    MatVec h_apply = [&](const Eigen::VectorXd& p, Eigen::VectorXd& out) {
      Eigen::VectorXd masked = p;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (fixed[i]) masked(i) = 0.0;
      }
      v.apply(masked, vp);
      for (Eigen::Index i = 0; i < n; ++i) out(i) = fixed[i] ? p(i) : vp(i) + inv_y2(i) * p(i);
    };
    // p'Hp = p'Vp + sum p_i^2 / y_i^2 on the free block
    CurvatureCheck v_curvature = [&](const Eigen::VectorXd& p, double php) {
      double barrier = 0.0;
      double fixed_part = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (fixed[i]) fixed_part += p(i) * p(i);
        else barrier += inv_y2(i) * p(i) * p(i);
      }
      const double pvp = php - barrier - fixed_part;
      const double scale = std::max(barrier, 1e-300);
      return pvp > -1e-12 * scale && php > 0.0;
    };
    step = precond.cwiseProduct(rhs);
    auto cg = conjugate_gradient(h_apply, precond, rhs, step, 1e-12,
                                 static_cast<int>(std::min<Eigen::Index>(2 * n + 20, 2000)), v_curvature);
    if (cg.aborted) throw NotPositiveDefiniteError(model_name);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fixed[i]) step(i) = 0.0;
    }
    {
      // curvature of V itself along the Newton direction
      Eigen::VectorXd masked = step;
      v.apply(masked, vp);
      if (!(step.dot(vp) > 0.0) && step.squaredNorm() > 0.0) throw NotPositiveDefiniteError(model_name);
    }

    // projected backtracking line search, keeping y > 0
    const double f0 = objective(y, vy);
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (step(i) < 0.0) alpha = std::min(alpha, -0.99 * y(i) / step(i));
    }
    // inside the quadratic region (Newton decrement below 1/4) the full step
    // is safe for a self-concordant objective, and there the predicted
    // decrease can sit below the rounding of f, so Armijo would stall
    const double decrement2 = -grad.dot(step);
    bool accepted = false;
    if (decrement2 >= 0.0 && decrement2 < 0.0625 && alpha == 1.0) {
      trial = (y + step).cwiseMin(upper);
      v.apply(trial, vtrial);
      accepted = std::isfinite(objective(trial, vtrial));
    }
    for (int ls = 0; !accepted && ls < 60; ++ls) {
      trial = (y + alpha * step).cwiseMin(upper);
      v.apply(trial, vtrial);
      const double f1 = objective(trial, vtrial);
      if (std::isfinite(f1) && f1 <= f0 + 1e-4 * grad.dot(trial - y)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // rounding floor reached: accept if already near-stationary
      if (stationarity <= 1e3 * tol) return y;
      throw SolverError("solve_quad_log: line search failed (stationarity " +
                        std::to_string(stationarity) + ")");
    }
    y = trial;
    vy = vtrial;
  }
  throw SolverError("solve_quad_log: iteration limit reached");
}

}  // namespace portrisk
