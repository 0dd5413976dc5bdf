#include "portrisk/strategies.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "portrisk/errors.hpp"

namespace portrisk {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_cap(StrategyKind kind, double cap, std::size_t n) {
  if (!(cap > 0.0 && cap <= 1.0) || cap * static_cast<double>(n) < 1.0 - 1e-12) {
    throw StrategyError(kind, "weight cap " + std::to_string(cap) + " infeasible for " +
                                  std::to_string(n) + " assets");
  }
}

PortfolioWeights single_asset(const std::vector<std::string>& ids) {
  return {ids, Eigen::VectorXd::Ones(1)};
}

}  // namespace

std::string_view strategy_slug(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::ValueWeighted: return "value_weighted";
    case StrategyKind::EqualWeighted: return "equal_weighted";
    case StrategyKind::MinimumVariance: return "min_variance";
    case StrategyKind::MaximumDiversification: return "max_diversification";
    case StrategyKind::RiskParity: return "risk_parity";
  }
  return "unknown";
}

std::string_view strategy_title(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::ValueWeighted: return "Market (Value-Weighted)";
    case StrategyKind::EqualWeighted: return "Equal Weighted";
    case StrategyKind::MinimumVariance: return "Minimum Variance";
    case StrategyKind::MaximumDiversification: return "Maximum Diversification";
    case StrategyKind::RiskParity: return "Risk Parity";
  }
  return "unknown";
}

std::optional<StrategyKind> parse_strategy_kind(std::string_view text) {
  for (auto kind : kAllStrategies) {
    if (strategy_slug(kind) == text) return kind;
  }
  return std::nullopt;
}

bool is_benchmark(StrategyKind kind) {
  return kind == StrategyKind::ValueWeighted || kind == StrategyKind::EqualWeighted;
}

QuadraticOperator quadratic_operator(const RiskModel& model) {
  QuadraticOperator op;
  op.dim = static_cast<Eigen::Index>(model.size());
  op.diagonal_hint = structural_diagonal(model);
  op.apply = [&model](const Eigen::VectorXd& x, Eigen::VectorXd& out) { cov_matvec(model, x, out); };
  return op;
}

double portfolio_variance(const RiskModel& model, const Eigen::VectorXd& w) {
  return w.dot(cov_matvec(model, w));
}

double diversification_ratio(const RiskModel& model, const Eigen::VectorXd& w) {
  return implied_volatilities(model).dot(w) / std::sqrt(portfolio_variance(model, w));
}

Eigen::VectorXd clean_weights(Eigen::VectorXd w, double cap) {
  w = w.cwiseMax(0.0);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) < kPositionThreshold) w(i) = 0.0;
  }
  const double total = w.sum();
  if (!(total > 0.0)) throw SolverError("portfolio has no positive weight");
  const double missing = 1.0 - total;
  // spread the correction over positions strictly below the cap
  double room_mass = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) > 0.0 && w(i) < cap - 1e-12) room_mass += w(i);
  }
  if (missing > 0.0 && room_mass > 0.0) {
    const double scale = 1.0 + missing / room_mass;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (w(i) > 0.0 && w(i) < cap - 1e-12) w(i) = std::min(w(i) * scale, cap);
    }
    w /= w.sum();
  } else {
    w /= total;
  }
  return w;
}

PortfolioWeights equal_weight(const UniverseSnapshot& snapshot) {
  const auto n = static_cast<Eigen::Index>(snapshot.size());
  if (n < 1) throw std::invalid_argument("equal_weight: empty universe");
  return {snapshot.asset_ids, Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))};
}

PortfolioWeights value_weight(const UniverseSnapshot& snapshot) {
  if (snapshot.size() < 1) throw std::invalid_argument("value_weight: empty universe");
  return {snapshot.asset_ids, snapshot.caps / snapshot.caps.sum()};
}

PortfolioWeights min_variance(const RiskModel& model, const StrategyConfig& config, QpSolution* solution) {
  const auto n = static_cast<Eigen::Index>(model.size());
  if (n == 1) return single_asset(model.asset_ids);
  check_cap(StrategyKind::MinimumVariance, config.weight_cap, model.size());

  QpProblem qp;
  qp.quadratic = quadratic_operator(model);
  qp.linear = Eigen::VectorXd::Zero(n);
  qp.eq.push_back(LinearConstraint::dense(Eigen::VectorXd::Ones(n), 1.0));
  qp.lower = Eigen::VectorXd::Zero(n);
  qp.upper = Eigen::VectorXd::Constant(n, std::min(config.weight_cap, 1.0));
  const QpSolution sol = solve_qp(qp, config.solver);
  if (solution) *solution = sol;
  if (sol.status != QpStatus::Optimal) {
    throw StrategyError(StrategyKind::MinimumVariance,
                        "solver status " + to_string(sol.status) + ", KKT residual " +
                            std::to_string(sol.kkt_residual));
  }
  return {model.asset_ids, clean_weights(sol.x, config.weight_cap)};
}

PortfolioWeights max_diversification(const RiskModel& model, const Eigen::VectorXd& sigma,
                                     const StrategyConfig& config, QpSolution* solution) {
  const auto n = static_cast<Eigen::Index>(model.size());
  if (sigma.size() != n) throw std::invalid_argument("max_diversification: sigma dimension mismatch");
  if (n == 1) return single_asset(model.asset_ids);
  check_cap(StrategyKind::MaximumDiversification, config.weight_cap, model.size());
  if (!(sigma.array() > 0.0).all()) {
    throw StrategyError(StrategyKind::MaximumDiversification, "volatilities must be positive");
  }
  const double cap = config.weight_cap;

  // variables (Z_1..Z_n, K)
  QpProblem qp;
  const Eigen::VectorXd hint = structural_diagonal(model);
  qp.quadratic.dim = n + 1;
  qp.quadratic.diagonal_hint.resize(n + 1);
  qp.quadratic.diagonal_hint << hint, 0.0;
  qp.quadratic.apply = [&model, n](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    Eigen::VectorXd head(n);
    cov_matvec(model, x.head(n), head);
    out.resize(n + 1);
    out.head(n) = head;
    out(n) = 0.0;
  };
  qp.linear = Eigen::VectorXd::Zero(n + 1);

  Eigen::VectorXd row(n + 1);
  row << sigma, 0.0;
  qp.eq.push_back(LinearConstraint::dense(row, 1.0));
  row << Eigen::VectorXd::Ones(n), -1.0;
  qp.eq.push_back(LinearConstraint::dense(row, 0.0));
  qp.ineq.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    LinearConstraint c;
    c.coeffs.resize(n + 1);
    c.coeffs.insert(i) = 1.0;
    c.coeffs.insert(n) = -cap;
    c.rhs = 0.0;
    qp.ineq.push_back(std::move(c));
  }
  qp.lower = Eigen::VectorXd::Zero(n + 1);
  qp.upper = Eigen::VectorXd::Constant(n + 1, kInf);

  const QpSolution sol = solve_qp(qp, config.solver);
  if (solution) *solution = sol;
  if (sol.status != QpStatus::Optimal) {
    throw StrategyError(StrategyKind::MaximumDiversification,
                        "solver status " + to_string(sol.status) + ", KKT residual " +
                            std::to_string(sol.kkt_residual));
  }
  const double k = sol.x(n);
  if (!(k > 1e-12)) throw StrategyError(StrategyKind::MaximumDiversification, "degenerate solution K <= 1e-12");
  Eigen::VectorXd x = sol.x.head(n) / k;
  return {model.asset_ids, clean_weights(x, cap)};
}

PortfolioWeights risk_parity(const RiskModel& model, const StrategyConfig& config) {
  if (model.size() == 1) return single_asset(model.asset_ids);
  if (const auto* shrunk = std::get_if<ShrunkSampleModel>(&model.repr)) {
    if (!shrunk->psd_repair_enabled) throw NotPositiveDefiniteError(std::string(model_slug(model.kind())));
  }
  if (!(config.rp_upper > 0.0)) throw StrategyError(StrategyKind::RiskParity, "upper bound d must be positive");
  const Eigen::VectorXd y =
      solve_quad_log(quadratic_operator(model), config.rp_upper, config.solver, std::string(model_slug(model.kind())));
  return {model.asset_ids, clean_weights(y / y.sum(), 1.0)};
}

PortfolioWeights build_portfolio(StrategyKind kind, const UniverseSnapshot& snapshot,
                                 const RiskModel& model, const StrategyConfig& config) {
  switch (kind) {
    case StrategyKind::ValueWeighted: return value_weight(snapshot);
    case StrategyKind::EqualWeighted: return equal_weight(snapshot);
    case StrategyKind::MinimumVariance: return min_variance(model, config);
    case StrategyKind::MaximumDiversification:
      return max_diversification(model, implied_volatilities(model), config);
    case StrategyKind::RiskParity: return risk_parity(model, config);
  }
  throw std::invalid_argument("unknown strategy");
}

}  // namespace portrisk
