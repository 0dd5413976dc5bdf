#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <functional>

#include "portrisk/qp.hpp"

namespace portrisk {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

SpMat stack_rows(const std::vector<LinearConstraint>& rows, Eigen::Index n) {
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].coeffs.size() != n) {
      throw std::invalid_argument("constraint " + std::to_string(r) + " has dimension " +
                                  std::to_string(rows[r].coeffs.size()) + ", expected " +
                                  std::to_string(n));
    }
    for (Eigen::SparseVector<double>::InnerIterator it(rows[r].coeffs); it; ++it) {
      if (it.value() != 0.0) trips.emplace_back(static_cast<int>(r), it.index(), it.value());
    }
  }
  SpMat m(static_cast<Eigen::Index>(rows.size()), n);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

Eigen::VectorXd stack_rhs(const std::vector<LinearConstraint>& rows) {
  Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) b(static_cast<Eigen::Index>(r)) = rows[r].rhs;
  return b;
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Largest alpha in (0, 1] keeping v + alpha*dv > 0 where mask holds.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv, const std::vector<bool>* mask) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(i)]) continue;
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  }
  return alpha;
}

// The problem after validation, in 1/2 x'Qx form with Q = 2V.
struct Canonical {
  Eigen::Index n = 0;
  QuadraticOperator::Apply v_apply;
  Eigen::VectorXd q_hint;  // diagonal hint of Q
  Eigen::VectorXd c;
  SpMat a;
  Eigen::VectorXd b;
  SpMat g;
  Eigen::VectorXd h;
  Eigen::VectorXd l;
  Eigen::VectorXd u;
  std::vector<bool> has_l;
  std::vector<bool> has_u;

  void q_apply(const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
    v_apply(x, out);
    out *= 2.0;
  }
};

struct Iterate {
  Eigen::VectorXd x, y, s, zg, zl, zu;
};

class KktEvaluator {
 public:
  explicit KktEvaluator(const Canonical& p) : p_(p) {}

  // Returns {primal, dual, complementarity}.
  std::array<double, 3> residuals(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& zg, const Eigen::VectorXd& zl,
                                  const Eigen::VectorXd& zu) const {
    Eigen::VectorXd qx(p_.n);
    p_.q_apply(x, qx);
    Eigen::VectorXd rd = qx + p_.c - p_.a.transpose() * y + p_.g.transpose() * zg - zl + zu;
    double dual = inf_norm(rd);
    for (const auto* z : {&zg, &zl, &zu}) {
      if (z->size()) dual = std::max(dual, -z->minCoeff());
    }
    const double primal = primal_violation(x);
    double comp = 0.0;
    Eigen::VectorXd gx = p_.g * x;
    for (Eigen::Index j = 0; j < gx.size(); ++j) comp = std::max(comp, std::abs(zg(j) * (p_.h(j) - gx(j))));
    for (Eigen::Index i = 0; i < p_.n; ++i) {
      if (p_.has_l[i]) comp = std::max(comp, std::abs(zl(i) * (x(i) - p_.l(i))));
      if (p_.has_u[i]) comp = std::max(comp, std::abs(zu(i) * (p_.u(i) - x(i))));
    }
    return {primal, dual, comp};
  }

  double primal_violation(const Eigen::VectorXd& x) const {
    double viol = 0.0;
    if (p_.a.rows()) viol = inf_norm(p_.a * x - p_.b);
    if (p_.g.rows()) viol = std::max(viol, (p_.g * x - p_.h).cwiseMax(0.0).maxCoeff());
    for (Eigen::Index i = 0; i < p_.n; ++i) {
      if (p_.has_l[i]) viol = std::max(viol, p_.l(i) - x(i));
      if (p_.has_u[i]) viol = std::max(viol, x(i) - p_.u(i));
    }
    return viol;
  }

 private:
  const Canonical& p_;
};

Canonical canonicalize(const QpProblem& problem) {
  Canonical p;
  p.n = problem.quadratic.dim;
  const auto n = p.n;
  if (!problem.quadratic.apply) throw std::invalid_argument("QpProblem: missing quadratic operator");
  if (problem.lower.size() != n || problem.upper.size() != n) {
    throw std::invalid_argument("QpProblem: bound dimension mismatch");
  }
  p.c = problem.linear.size() ? problem.linear : Eigen::VectorXd::Zero(n);
  if (p.c.size() != n) throw std::invalid_argument("QpProblem: linear term dimension mismatch");
  p.v_apply = problem.quadratic.apply;

  if (problem.quadratic.diagonal_hint.size() == n) {
    p.q_hint = 2.0 * problem.quadratic.diagonal_hint.cwiseMax(0.0);
  } else {
    p.q_hint = Eigen::VectorXd::Zero(n);
    if (n <= 256) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n), col(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        e(i) = 1.0;
        problem.quadratic.apply(e, col);
        p.q_hint(i) = 2.0 * std::max(col(i), 0.0);
        e(i) = 0.0;
      }
    }
  }

  // fixed variables become equality rows so the interior is non-empty
  std::vector<LinearConstraint> eq = problem.eq;
  p.l = problem.lower;
  p.u = problem.upper;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p.l(i) > p.u(i)) continue;  // reported as infeasible by the caller
    if (p.l(i) == p.u(i)) {
      LinearConstraint row;
      row.coeffs.resize(n);
      row.coeffs.insert(i) = 1.0;
      row.rhs = p.l(i);
      eq.push_back(std::move(row));
      p.l(i) = -kInf;
      p.u(i) = kInf;
    }
  }
  p.a = stack_rows(eq, n);
  p.b = stack_rhs(eq);
  p.g = stack_rows(problem.ineq, n);
  p.h = stack_rhs(problem.ineq);
  p.has_l.resize(static_cast<std::size_t>(n));
  p.has_u.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    p.has_l[i] = std::isfinite(p.l(i));
    p.has_u[i] = std::isfinite(p.u(i));
  }
  return p;
}

// Farkas-type certificate: a row whose attainable range over the box
// excludes its right-hand side.
bool box_infeasible(const QpProblem& problem, double tol) {
  const auto& l = problem.lower;
  const auto& u = problem.upper;
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    if (l(i) > u(i)) return true;
  }
  auto range = [&](const LinearConstraint& row) {
    double lo = 0.0, hi = 0.0;
    for (Eigen::SparseVector<double>::InnerIterator it(row.coeffs); it; ++it) {
      const double a = it.value();
      const double li = l(it.index()), ui = u(it.index());
      lo += a > 0 ? a * li : a * ui;
      hi += a > 0 ? a * ui : a * li;
    }
    return std::pair{lo, hi};
  };
  for (const auto& row : problem.eq) {
    auto [lo, hi] = range(row);
    const double slack = tol * (1.0 + std::abs(row.rhs));
    if (row.rhs < lo - slack || row.rhs > hi + slack) return true;
  }
  for (const auto& row : problem.ineq) {
    auto [lo, hi] = range(row);
    if (lo > row.rhs + tol * (1.0 + std::abs(row.rhs))) return true;
  }
  return false;
}

class InteriorPoint {
 public:
  InteriorPoint(const Canonical& p, const SolverSettings& settings)
      : p_(p), settings_(settings), kkt_(p) {}

  // Runs until residuals fall below `target` or the iteration budget ends.
  // Returns true on convergence.
  // `finish` is offered the iterate once residuals are small; returning true
  // ends the run.
  bool run(Iterate& it, double target, int& iterations, std::vector<QpTraceRow>* trace,
           const std::function<bool(const Iterate&)>& finish) {
    const auto n = p_.n;
    const auto me = p_.a.rows();
    const auto mi = p_.g.rows();
    Eigen::VectorXd qx(n);
    double best_primal = kInf;
    double best_worst = kInf;
    int stall = 0;
    int no_progress = 0;

    while (iterations < settings_.max_iterations) {
      p_.q_apply(it.x, qx);
      Eigen::VectorXd rd = qx + p_.c - p_.a.transpose() * it.y + p_.g.transpose() * it.zg - it.zl + it.zu;
      Eigen::VectorXd re = p_.a * it.x - p_.b;
      Eigen::VectorXd rg = p_.g * it.x + it.s - p_.h;
      Eigen::VectorXd tl = slack_lower(it.x), tu = slack_upper(it.x);
      const double mu = complementarity(it, tl, tu);
      const double primal_res = std::max(inf_norm(re), inf_norm(rg));
      const double dual_res = inf_norm(rd);
        if (trace) {
        trace->push_back({iterations, mu, primal_res, dual_res, objective(it.x, qx)});
      }
      const double worst = std::max({primal_res, dual_res, max_product(it, tl, tu)});
      if (worst <= target) return true;
      if (worst <= finish_threshold_ && finish && finish(it)) {
        finished_ = true;
        return true;
      }
      // no progress for a while: rounding floor of the Newton solves
      if (worst < 0.5 * best_worst) {
        best_worst = worst;
        no_progress = 0;
      } else if (++no_progress > 30 && mu < target * 1e-6) {
        return false;
      }
      if (primal_res < 0.5 * best_primal) {
        best_primal = primal_res;
        stall = 0;
      } else if (++stall > 40 && primal_res > std::sqrt(target)) {
        infeasible_ = true;
        return false;
      }
      ++iterations;

      // scaling matrices
      Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (p_.has_l[i]) theta(i) += it.zl(i) / tl(i);
        if (p_.has_u[i]) theta(i) += it.zu(i) / tu(i);
      }
      Eigen::VectorXd theta_g = it.zg.cwiseQuotient(it.s);
      Eigen::VectorXd precond = p_.q_hint + theta;
      if (mi) {
        for (Eigen::Index j = 0; j < mi; ++j) {
          for (SpMat::InnerIterator e(p_.g, j); e; ++e) precond(e.index()) += theta_g(j) * e.value() * e.value();
        }
      }
      const double reg = 1e-12 * std::max(1.0, precond.maxCoeff());
      precond.array() += reg;
      precond = precond.cwiseMax(1e-300);
      const Eigen::VectorXd precond_inv = precond.cwiseInverse();

      Eigen::VectorXd tmp(n);
      MatVec h_apply = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
        p_.q_apply(v, out);
        out += theta.cwiseProduct(v) + reg * v;
        if (mi) out += p_.g.transpose() * (theta_g.cwiseProduct(p_.g * v));
      };
      auto solve_h = [&](const Eigen::VectorXd& rhs) {
        Eigen::VectorXd sol = precond_inv.cwiseProduct(rhs);
        conjugate_gradient(h_apply, precond_inv, rhs, sol, 1e-11, cg_limit());
          return sol;
      };

      // H^{-1} A' and the Schur complement A H^{-1} A'
      Eigen::MatrixXd w(n, me);
      for (Eigen::Index k = 0; k < me; ++k) {
        Eigen::VectorXd col = p_.a.row(k).transpose();
        w.col(k) = solve_h(col);
      }
      Eigen::MatrixXd schur = p_.a * w;
      Eigen::LDLT<Eigen::MatrixXd> schur_ldlt;
      if (me) schur_ldlt.compute(0.5 * (schur + schur.transpose()));

      auto direction = [&](const Eigen::VectorXd& rc_l, const Eigen::VectorXd& rc_u,
                           const Eigen::VectorXd& rc_g, Iterate& d) {
        Eigen::VectorXd rhs = -rd;
        if (mi) rhs -= p_.g.transpose() * (rc_g + it.zg.cwiseProduct(rg)).cwiseQuotient(it.s);
        for (Eigen::Index i = 0; i < n; ++i) {
          if (p_.has_l[i]) rhs(i) += rc_l(i) / tl(i);
          if (p_.has_u[i]) rhs(i) -= rc_u(i) / tu(i);
        }
        Eigen::VectorXd base = solve_h(rhs);
        d.y = me ? Eigen::VectorXd(schur_ldlt.solve(-re - p_.a * base)) : Eigen::VectorXd();
        d.x = me ? Eigen::VectorXd(base + w * d.y) : base;
        d.zl = Eigen::VectorXd::Zero(n);
        d.zu = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          if (p_.has_l[i]) d.zl(i) = (rc_l(i) - it.zl(i) * d.x(i)) / tl(i);
          if (p_.has_u[i]) d.zu(i) = (rc_u(i) + it.zu(i) * d.x(i)) / tu(i);
        }
        if (mi) {
          d.s = -rg - p_.g * d.x;
          d.zg = (rc_g - it.zg.cwiseProduct(d.s)).cwiseQuotient(it.s);
        } else {
          d.s.resize(0);
          d.zg.resize(0);
        }
      };

      auto step_length = [&](const Iterate& d) {
        double a = 1.0;
        a = std::min(a, max_step(tl, d.x, &p_.has_l));
        a = std::min(a, max_step(tu, -d.x, &p_.has_u));
        a = std::min(a, max_step(it.zl, d.zl, &p_.has_l));
        a = std::min(a, max_step(it.zu, d.zu, &p_.has_u));
        if (mi) {
          a = std::min(a, max_step(it.s, d.s, nullptr));
          a = std::min(a, max_step(it.zg, d.zg, nullptr));
        }
        return a;
      };

      // predictor
      Eigen::VectorXd rc_l = -tl.cwiseProduct(it.zl);
      Eigen::VectorXd rc_u = -tu.cwiseProduct(it.zu);
      Eigen::VectorXd rc_g = -it.s.cwiseProduct(it.zg);
      mask(rc_l, p_.has_l);
      mask(rc_u, p_.has_u);
      Iterate aff;
      direction(rc_l, rc_u, rc_g, aff);
      const double a_aff = step_length(aff);

      Iterate trial;
      trial.x = it.x + a_aff * aff.x;
      trial.zl = it.zl + a_aff * aff.zl;
      trial.zu = it.zu + a_aff * aff.zu;
      trial.s = mi ? Eigen::VectorXd(it.s + a_aff * aff.s) : Eigen::VectorXd();
      trial.zg = mi ? Eigen::VectorXd(it.zg + a_aff * aff.zg) : Eigen::VectorXd();
      const double mu_aff = complementarity(trial, slack_lower(trial.x), slack_upper(trial.x));
      const double sigma = mu > 0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;

      // corrector
      const double target_mu = sigma * mu;
      for (Eigen::Index i = 0; i < n; ++i) {
        rc_l(i) = p_.has_l[i] ? target_mu - tl(i) * it.zl(i) - aff.x(i) * aff.zl(i) : 0.0;
        rc_u(i) = p_.has_u[i] ? target_mu - tu(i) * it.zu(i) + aff.x(i) * aff.zu(i) : 0.0;
      }
      if (mi) rc_g = Eigen::VectorXd::Constant(mi, target_mu) - it.s.cwiseProduct(it.zg) - aff.s.cwiseProduct(aff.zg);
      Iterate d;
      direction(rc_l, rc_u, rc_g, d);
      double alpha = std::min(1.0, 0.995 * step_length(d));

      // the second-order term can overshoot along flat directions and make
      // the iterates cycle; fall back to a plain centred step when mu does
      // not drop
      auto mu_after = [&](const Iterate& dir, double a) {
        Iterate t;
        t.x = it.x + a * dir.x;
        t.zl = it.zl + a * dir.zl;
        t.zu = it.zu + a * dir.zu;
        t.s = mi ? Eigen::VectorXd(it.s + a * dir.s) : Eigen::VectorXd();
        t.zg = mi ? Eigen::VectorXd(it.zg + a * dir.zg) : Eigen::VectorXd();
        return complementarity(t, slack_lower(t.x), slack_upper(t.x));
      };
      if (mu_after(d, alpha) > (1.0 - 0.01 * alpha) * mu) {
        const double centre_mu = std::max(sigma, 0.5) * mu;
        for (Eigen::Index i = 0; i < n; ++i) {
          rc_l(i) = p_.has_l[i] ? centre_mu - tl(i) * it.zl(i) : 0.0;
          rc_u(i) = p_.has_u[i] ? centre_mu - tu(i) * it.zu(i) : 0.0;
        }
        if (mi) rc_g = Eigen::VectorXd::Constant(mi, centre_mu) - it.s.cwiseProduct(it.zg);
        Iterate centred;
        direction(rc_l, rc_u, rc_g, centred);
        const double a_centred = std::min(1.0, 0.995 * step_length(centred));
        if (mu_after(centred, a_centred) < mu_after(d, alpha)) {
          d = std::move(centred);
          alpha = a_centred;
        }
      }

      it.x += alpha * d.x;
      if (me) it.y += alpha * d.y;
      it.zl += alpha * d.zl;
      it.zu += alpha * d.zu;
      if (mi) {
        it.s += alpha * d.s;
        it.zg += alpha * d.zg;
      }
      // keep strictly interior against rounding
      for (Eigen::Index i = 0; i < n; ++i) {
        if (p_.has_l[i]) {
          it.x(i) = std::max(it.x(i), p_.l(i) + 1e-300);
          it.zl(i) = std::max(it.zl(i), 1e-300);
        }
        if (p_.has_u[i]) {
          it.x(i) = std::min(it.x(i), p_.u(i) - 1e-300);
          it.zu(i) = std::max(it.zu(i), 1e-300);
        }
      }
      if (mi) {
        it.s = it.s.cwiseMax(1e-300);
        it.zg = it.zg.cwiseMax(1e-300);
      }
    }
    return false;
  }

  bool infeasible() const { return infeasible_; }
  bool finished() const { return finished_; }
  void set_finish_threshold(double t) { finish_threshold_ = t; }

  Iterate initial_point() const {
    const auto n = p_.n;
    Iterate it;
    Eigen::VectorXd centre(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (p_.has_l[i] && p_.has_u[i]) centre(i) = 0.5 * (p_.l(i) + p_.u(i));
      else if (p_.has_l[i]) centre(i) = p_.l(i) + 1.0;
      else if (p_.has_u[i]) centre(i) = p_.u(i) - 1.0;
      else centre(i) = 0.0;
    }
    // least-norm correction toward the equality constraints
    Eigen::VectorXd x = centre;
    if (p_.a.rows()) {
      Eigen::MatrixXd aat = Eigen::MatrixXd(p_.a * p_.a.transpose());
      Eigen::VectorXd lam = aat.completeOrthogonalDecomposition().solve(Eigen::VectorXd(p_.b - p_.a * centre));
      x += p_.a.transpose() * lam;
    }
    // pull back into the interior of the box
    for (Eigen::Index i = 0; i < n; ++i) {
      if (p_.has_l[i] && p_.has_u[i]) {
        const double margin = 0.01 * (p_.u(i) - p_.l(i));
        x(i) = std::clamp(x(i), p_.l(i) + margin, p_.u(i) - margin);
      } else if (p_.has_l[i]) {
        const double margin = 1e-2 * std::max(1.0, std::abs(centre(i) - p_.l(i)));
        x(i) = std::max(x(i), p_.l(i) + margin);
      } else if (p_.has_u[i]) {
        const double margin = 1e-2 * std::max(1.0, std::abs(p_.u(i) - centre(i)));
        x(i) = std::min(x(i), p_.u(i) - margin);
      }
    }
    it.x = x;
    it.y = Eigen::VectorXd::Zero(p_.a.rows());

    Eigen::VectorXd qx(n);
    p_.q_apply(x, qx);
    const double scale = std::max({1.0, inf_norm(qx + p_.c)});
    it.zl = Eigen::VectorXd::Zero(n);
    it.zu = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (p_.has_l[i]) it.zl(i) = scale;
      if (p_.has_u[i]) it.zu(i) = scale;
    }
    const auto mi = p_.g.rows();
    if (mi) {
      Eigen::VectorXd gap = p_.h - p_.g * x;
      it.s = gap.cwiseMax(1e-2 * (1.0 + gap.cwiseAbs().maxCoeff()));
      it.zg = Eigen::VectorXd::Constant(mi, scale);
    } else {
      it.s.resize(0);
      it.zg.resize(0);
    }
    return it;
  }

  Eigen::VectorXd slack_lower(const Eigen::VectorXd& x) const {
    Eigen::VectorXd t = Eigen::VectorXd::Ones(p_.n);
    for (Eigen::Index i = 0; i < p_.n; ++i) {
      if (p_.has_l[i]) t(i) = x(i) - p_.l(i);
    }
    return t;
  }
  Eigen::VectorXd slack_upper(const Eigen::VectorXd& x) const {
    Eigen::VectorXd t = Eigen::VectorXd::Ones(p_.n);
    for (Eigen::Index i = 0; i < p_.n; ++i) {
      if (p_.has_u[i]) t(i) = p_.u(i) - x(i);
    }
    return t;
  }

 private:
  int cg_limit() const { return static_cast<int>(std::min<Eigen::Index>(2 * p_.n + 20, 2000)); }

  static void mask(Eigen::VectorXd& v, const std::vector<bool>& m) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (!m[static_cast<std::size_t>(i)]) v(i) = 0.0;
    }
  }

  double complementarity(const Iterate& it, const Eigen::VectorXd& tl, const Eigen::VectorXd& tu) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < p_.n; ++i) {
      if (p_.has_l[i]) { sum += tl(i) * it.zl(i); ++count; }
      if (p_.has_u[i]) { sum += tu(i) * it.zu(i); ++count; }
    }
    if (it.s.size()) {
      sum += it.s.dot(it.zg);
      count += static_cast<std::size_t>(it.s.size());
    }
    return count ? sum / static_cast<double>(count) : 0.0;
  }

  double max_product(const Iterate& it, const Eigen::VectorXd& tl, const Eigen::VectorXd& tu) const {
    double m = 0.0;
    for (Eigen::Index i = 0; i < p_.n; ++i) {
      if (p_.has_l[i]) m = std::max(m, tl(i) * it.zl(i));
      if (p_.has_u[i]) m = std::max(m, tu(i) * it.zu(i));
    }
    if (it.s.size()) m = std::max(m, it.s.cwiseProduct(it.zg).maxCoeff());
    return m;
  }

  double objective(const Eigen::VectorXd& x, const Eigen::VectorXd& qx) const {
    return 0.5 * x.dot(qx) + p_.c.dot(x);
  }

  const Canonical& p_;
  const SolverSettings& settings_;
  KktEvaluator kkt_;
  bool infeasible_ = false;
  bool finished_ = false;
  double finish_threshold_ = 0.0;
};

// Equality-constrained solve on a guessed active set followed by a few
// primal-dual active-set corrections. Produces exact zeros at active bounds.
class Polisher {
 public:
  explicit Polisher(const Canonical& p) : p_(p), kkt_(p) {}

  bool polish(const Iterate& start, double tol, QpSolution& out) {
    const auto n = p_.n;
    const auto mi = p_.g.rows();
    std::vector<int> state(static_cast<std::size_t>(n), 0);  // -1 lower, +1 upper, 0 free
    std::vector<bool> ineq_active(static_cast<std::size_t>(mi), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (p_.has_l[i] && start.zl(i) > start.x(i) - p_.l(i)) state[i] = -1;
      else if (p_.has_u[i] && start.zu(i) > p_.u(i) - start.x(i)) state[i] = 1;
    }
    for (Eigen::Index j = 0; j < mi; ++j) ineq_active[j] = start.zg(j) > start.s(j);

    for (int round = 0; round < 25; ++round) {
      Iterate cand;
      if (!solve_active_set(state, ineq_active, cand)) return false;
      const auto [primal, dual, comp] = kkt_.residuals(cand.x, cand.y, cand.zg, cand.zl, cand.zu);
      const double res = std::max({primal, dual, comp});
      if (res <= tol) {
        out.x = cand.x;
        out.y = cand.y;
        out.z_ineq = cand.zg;
        out.z_lower = cand.zl;
        out.z_upper = cand.zu;
        out.kkt_residual = res;
        return true;
      }
      // primal-dual active-set correction
      bool changed = false;
      const double eps = 0.1 * tol;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (state[i] == -1 && cand.zl(i) < -eps) { state[i] = 0; changed = true; }
        else if (state[i] == 1 && cand.zu(i) < -eps) { state[i] = 0; changed = true; }
        else if (state[i] == 0) {
          if (p_.has_l[i] && cand.x(i) < p_.l(i) - eps) { state[i] = -1; changed = true; }
          else if (p_.has_u[i] && cand.x(i) > p_.u(i) + eps) { state[i] = 1; changed = true; }
        }
      }
      if (mi) {
        Eigen::VectorXd gx = p_.g * cand.x;
        for (Eigen::Index j = 0; j < mi; ++j) {
          if (ineq_active[j] && cand.zg(j) < -eps) { ineq_active[j] = false; changed = true; }
          else if (!ineq_active[j] && gx(j) > p_.h(j) + eps) { ineq_active[j] = true; changed = true; }
        }
      }
      if (!changed) return false;
    }
    return false;
  }

 private:
  bool solve_active_set(const std::vector<int>& state, const std::vector<bool>& ineq_active, Iterate& out) {
    const auto n = p_.n;
    const auto me = p_.a.rows();
    const auto mi = p_.g.rows();

    std::vector<Eigen::Index> free_idx;
    Eigen::VectorXd x_fixed = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[i] == -1) x_fixed(i) = p_.l(i);
      else if (state[i] == 1) x_fixed(i) = p_.u(i);
      else free_idx.push_back(i);
    }
    std::vector<Eigen::Index> act;
    for (Eigen::Index j = 0; j < mi; ++j) {
      if (ineq_active[j]) act.push_back(j);
    }
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    const auto m_e = me + static_cast<Eigen::Index>(act.size());
    if (m_e > 400) return false;

    // E restricted to the free variables, dense (m_e small)
    Eigen::MatrixXd e_free = Eigen::MatrixXd::Zero(m_e, nf);
    Eigen::VectorXd e_rhs(m_e);
    std::vector<Eigen::Index> pos(static_cast<std::size_t>(n), -1);
    for (Eigen::Index k = 0; k < nf; ++k) pos[free_idx[k]] = k;
    auto fill_row = [&](const SpMat& m, Eigen::Index row, Eigen::Index r, double rhs) {
      double fixed_part = 0.0;
      for (SpMat::InnerIterator e(m, row); e; ++e) {
        if (pos[e.index()] >= 0) e_free(r, pos[e.index()]) = e.value();
        else fixed_part += e.value() * x_fixed(e.index());
      }
      e_rhs(r) = rhs - fixed_part;
    };
    for (Eigen::Index k = 0; k < me; ++k) fill_row(p_.a, k, k, p_.b(k));
    for (std::size_t k = 0; k < act.size(); ++k) fill_row(p_.g, act[k], me + static_cast<Eigen::Index>(k), p_.h(act[k]));

    Eigen::VectorXd full(n), qout(n);
    auto scatter = [&](const Eigen::VectorXd& v) {
      full = x_fixed;
      for (Eigen::Index k = 0; k < nf; ++k) full(free_idx[k]) = v(k);
    };
    // gradient contribution of the fixed part
    Eigen::VectorXd q_fixed(n);
    p_.q_apply(x_fixed, q_fixed);
    Eigen::VectorXd lin(nf);
    Eigen::VectorXd hint(nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
      lin(k) = p_.c(free_idx[k]) + q_fixed(free_idx[k]);
      hint(k) = p_.q_hint(free_idx[k]);
    }

    Eigen::VectorXd x_free = Eigen::VectorXd::Zero(nf);
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m_e);
    if (nf > 0) {
      const double rho = std::max(hint.size() ? hint.mean() : 0.0, 1e-12);
      Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd pad(n);
      MatVec h_apply = [&](const Eigen::VectorXd& v, Eigen::VectorXd& o) {
        pad.setZero();
        for (Eigen::Index k = 0; k < nf; ++k) pad(free_idx[k]) = v(k);
        p_.q_apply(pad, qout);
        o.resize(nf);
        for (Eigen::Index k = 0; k < nf; ++k) o(k) = qout(free_idx[k]);
        if (m_e) o += rho * (e_free.transpose() * (e_free * v));
      };
      Eigen::VectorXd precond = hint;
      if (m_e) precond += rho * e_free.colwise().squaredNorm().transpose();
      const double floor = 1e-12 * std::max(1.0, precond.maxCoeff());
      precond = precond.cwiseMax(floor);
      const Eigen::VectorXd pinv = precond.cwiseInverse();
      const int limit = static_cast<int>(std::min<Eigen::Index>(2 * nf + 20, 2000));
      bool ok = true;
      auto solve_h = [&](const Eigen::VectorXd& rhs) {
        Eigen::VectorXd sol = pinv.cwiseProduct(rhs);
        auto res = conjugate_gradient(h_apply, pinv, rhs, sol, 1e-13, limit);
        if (res.aborted || !(res.relative_residual < 1e-8)) ok = false;
        return sol;
      };
      Eigen::VectorXd rhs = -lin;
      if (m_e) rhs += rho * e_free.transpose() * e_rhs;
      Eigen::VectorXd base = solve_h(rhs);
      if (m_e) {
        Eigen::MatrixXd w(nf, m_e);
        for (Eigen::Index k = 0; k < m_e; ++k) w.col(k) = solve_h(e_free.row(k).transpose());
        Eigen::MatrixXd schur = e_free * w;
        schur = 0.5 * (schur + schur.transpose()).eval();
        lambda = schur.completeOrthogonalDecomposition().solve(Eigen::VectorXd(e_rhs - e_free * base));
        x_free = base + w * lambda;
      } else {
        x_free = base;
      }
      if (!ok || !x_free.allFinite() || !lambda.allFinite()) return false;
    }
    scatter(x_free);
    out.x = full;
    out.y = lambda.head(me);
    out.zg = Eigen::VectorXd::Zero(mi);
    for (std::size_t k = 0; k < act.size(); ++k) out.zg(act[k]) = -lambda(me + static_cast<Eigen::Index>(k));

    Eigen::VectorXd grad(n);
    p_.q_apply(out.x, grad);
    grad += p_.c - p_.a.transpose() * out.y + p_.g.transpose() * out.zg;
    out.zl = Eigen::VectorXd::Zero(n);
    out.zu = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[i] == -1) out.zl(i) = grad(i);
      else if (state[i] == 1) out.zu(i) = -grad(i);
    }
    return true;
  }

  const Canonical& p_;
  KktEvaluator kkt_;
};

}  // namespace

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIterations: return "max_iterations";
  }
  return "unknown";
}

QuadraticOperator QuadraticOperator::dense(Eigen::MatrixXd v) {
  if (v.rows() != v.cols()) throw std::invalid_argument("QuadraticOperator::dense: matrix not square");
  QuadraticOperator op;
  op.dim = v.rows();
  op.diagonal_hint = v.diagonal().cwiseMax(0.0);
  op.apply = [m = std::move(v)](const Eigen::VectorXd& x, Eigen::VectorXd& out) { out.noalias() = m * x; };
  return op;
}

LinearConstraint LinearConstraint::dense(const Eigen::VectorXd& a, double rhs) {
  LinearConstraint c;
  c.coeffs = a.sparseView();
  c.rhs = rhs;
  return c;
}

CgResult conjugate_gradient(const MatVec& apply, const Eigen::VectorXd& precond_inverse,
                            const Eigen::VectorXd& rhs, Eigen::VectorXd& x, double rel_tol,
                            int max_iter, const CurvatureCheck& curvature_ok) {
  CgResult result;
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    x.setZero(rhs.size());
    return result;
  }
  if (x.size() != rhs.size()) x.setZero(rhs.size());
  Eigen::VectorXd hx(rhs.size());
  apply(x, hx);
  Eigen::VectorXd r = rhs - hx;
  Eigen::VectorXd z = precond_inverse.cwiseProduct(r);
  Eigen::VectorXd p = z;
  Eigen::VectorXd hp(rhs.size());
  double rz = r.dot(z);
  double best = r.norm();
  result.relative_residual = best / rhs_norm;
  while (result.iterations < max_iter && result.relative_residual > rel_tol) {
    apply(p, hp);
    const double php = p.dot(hp);
    if (curvature_ok && !curvature_ok(p, php)) {
      result.aborted = true;
      return result;
    }
    if (!(php > 0.0)) {
      result.aborted = true;
      return result;
    }
    const double alpha = rz / php;
    x += alpha * p;
    r -= alpha * hp;
    ++result.iterations;
    result.relative_residual = r.norm() / rhs_norm;
    z = precond_inverse.cwiseProduct(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
    // recompute the true residual now and then to avoid drift
    if (result.iterations % 50 == 0) {
      apply(x, hx);
      r = rhs - hx;
      result.relative_residual = r.norm() / rhs_norm;
    }
  }
  return result;
}

double primal_violation(const QpProblem& problem, const Eigen::VectorXd& x) {
  double viol = 0.0;
  for (const auto& row : problem.eq) viol = std::max(viol, std::abs(row.coeffs.dot(x.sparseView()) - row.rhs));
  for (const auto& row : problem.ineq) viol = std::max(viol, row.coeffs.dot(x.sparseView()) - row.rhs);
  viol = std::max(viol, (problem.lower - x).cwiseMax(0.0).maxCoeff());
  viol = std::max(viol, (x - problem.upper).cwiseMax(0.0).maxCoeff());
  return viol;
}

double kkt_residual(const QpProblem& problem, const QpSolution& point) {
  const Canonical p = canonicalize(problem);
  KktEvaluator kkt(p);
  // fixed variables were turned into extra equality rows; their multipliers
  // are the bound multipliers of the original problem
  Eigen::VectorXd y = Eigen::VectorXd::Zero(p.a.rows());
  y.head(point.y.size()) = point.y;
  Eigen::VectorXd zl = point.z_lower, zu = point.z_upper;
  for (Eigen::Index i = 0, k = point.y.size(); i < p.n; ++i) {
    if (problem.lower(i) == problem.upper(i)) {
      y(k++) = zl(i) - zu(i);
      zl(i) = zu(i) = 0.0;
    }
  }
  auto r = kkt.residuals(point.x, y, point.z_ineq.size() ? point.z_ineq : Eigen::VectorXd::Zero(p.g.rows()), zl, zu);
  return std::max({r[0], r[1], r[2]});
}

QpSolution solve_qp(const QpProblem& problem, const SolverSettings& settings) {
  if (!(settings.tolerance > 0.0)) throw std::invalid_argument("solve_qp: tolerance must be positive");
  QpSolution sol;
  const Canonical p = canonicalize(problem);
  const auto n = p.n;

  if (box_infeasible(problem, settings.tolerance)) {
    sol.status = QpStatus::Infeasible;
    sol.x = problem.lower.cwiseMax(problem.upper.cwiseMin(Eigen::VectorXd::Zero(n)));
    sol.kkt_residual = primal_violation(problem, sol.x);
    return sol;
  }

  InteriorPoint ipm(p, settings);
  Polisher polisher(p);
  KktEvaluator kkt(p);
  Iterate it = ipm.initial_point();
  std::vector<QpTraceRow>* trace = settings.record_trace ? &sol.trace : nullptr;

  double target = std::max(settings.tolerance * 1e-1, 1e-14);
  auto try_polish = [&](const Iterate& candidate) {
    QpSolution polished;
    if (!polisher.polish(candidate, settings.tolerance, polished)) return false;
    sol.x = polished.x;
    sol.y = polished.y;
    sol.z_ineq = polished.z_ineq;
    sol.z_lower = polished.z_lower;
    sol.z_upper = polished.z_upper;
    sol.kkt_residual = polished.kkt_residual;
    sol.polished = true;
    sol.status = QpStatus::Optimal;
    return true;
  };
  // polishing is tried along the way once the iterate is close
  ipm.set_finish_threshold(std::sqrt(settings.tolerance));
  for (int attempt = 0; attempt < 4; ++attempt) {
    const bool converged = ipm.run(it, target, sol.iterations, trace, try_polish);
    if (ipm.finished()) break;
    if (ipm.infeasible()) {
      sol.status = QpStatus::Infeasible;
      break;
    }
    if (try_polish(it) || !converged) break;
    target *= 1e-2;
  }

  if (!sol.polished) {
    sol.x = it.x;
    sol.y = it.y;
    sol.z_ineq = it.zg;
    sol.z_lower = it.zl;
    sol.z_upper = it.zu;
    auto r = kkt.residuals(it.x, it.y, it.zg, it.zl, it.zu);
    sol.kkt_residual = std::max({r[0], r[1], r[2]});
    if (sol.status != QpStatus::Infeasible) {
      sol.status = sol.kkt_residual <= settings.tolerance ? QpStatus::Optimal : QpStatus::MaxIterations;
    }
  }
  // strip multipliers of equality rows added for fixed variables
  if (sol.y.size() > static_cast<Eigen::Index>(problem.eq.size())) {
    Eigen::VectorXd extra = sol.y.tail(sol.y.size() - static_cast<Eigen::Index>(problem.eq.size()));
    sol.y.conservativeResize(static_cast<Eigen::Index>(problem.eq.size()));
    for (Eigen::Index i = 0, k = 0; i < n; ++i) {
      if (problem.lower(i) == problem.upper(i)) {
        const double m = extra(k++);
        sol.z_lower(i) = std::max(m, 0.0);
        sol.z_upper(i) = std::max(-m, 0.0);
      }
    }
  }

  Eigen::VectorXd vx(n);
  problem.quadratic.apply(sol.x, vx);
  sol.objective = sol.x.dot(vx) + p.c.dot(sol.x);
  return sol;
}

}  // namespace portrisk
