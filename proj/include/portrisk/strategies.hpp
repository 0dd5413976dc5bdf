#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "portrisk/data.hpp"
#include "portrisk/errors.hpp"
#include "portrisk/qp.hpp"
#include "portrisk/risk_models.hpp"

namespace portrisk {

/// Weights below this after solving are dropped; also the "position" threshold.
inline constexpr double kPositionThreshold = 1e-6;

struct PortfolioWeights {
  std::vector<std::string> asset_ids;
  Eigen::VectorXd w;

  std::size_t size() const { return asset_ids.size(); }
};

enum class StrategyKind {
  ValueWeighted,
  EqualWeighted,
  MinimumVariance,
  MaximumDiversification,
  RiskParity,
};

inline constexpr StrategyKind kAllStrategies[] = {
    StrategyKind::ValueWeighted, StrategyKind::EqualWeighted, StrategyKind::MinimumVariance,
    StrategyKind::MaximumDiversification, StrategyKind::RiskParity};

std::string_view strategy_slug(StrategyKind kind);
/// Column heading, e.g. "Minimum Variance".
std::string_view strategy_title(StrategyKind kind);
std::optional<StrategyKind> parse_strategy_kind(std::string_view text);
/// True for the strategies that ignore the risk model.
bool is_benchmark(StrategyKind kind);

struct StrategyConfig {
  double weight_cap = 0.05;  // u
  double rp_upper = 5.0;     // d
  SolverSettings solver;
};

/// Failure to build a portfolio, carrying the strategy name.
class StrategyError : public SolverError {
 public:
  StrategyError(StrategyKind kind, const std::string& what)
      : SolverError(std::string(strategy_slug(kind)) + ": " + what) {}
};

PortfolioWeights equal_weight(const UniverseSnapshot& snapshot);
PortfolioWeights value_weight(const UniverseSnapshot& snapshot);

/// min x'Vx  s.t.  1'x = 1, 0 <= x <= u.
/// `solution`, when given, receives the raw solver output (trace included
/// when config.solver.record_trace is set).
PortfolioWeights min_variance(const RiskModel& model, const StrategyConfig& config,
                              QpSolution* solution = nullptr);

/// Maximizes sigma'x / sqrt(x'Vx) over the capped long-only simplex by
/// solving for (Z, K) with Z = K x:
///   min Z'VZ  s.t.  sigma'Z = 1, 1'Z = K, Z <= K u, Z >= 0, K >= 0.
PortfolioWeights max_diversification(const RiskModel& model, const Eigen::VectorXd& sigma,
                                     const StrategyConfig& config, QpSolution* solution = nullptr);

/// Normalized minimizer of 1/2 Y'VY - sum log y_i on 0 < Y <= d.
/// The shrunk sample model is accepted only when PSD repair is enabled.
PortfolioWeights risk_parity(const RiskModel& model, const StrategyConfig& config);

/// Dispatches on `kind`. Model-free strategies ignore `model`.
PortfolioWeights build_portfolio(StrategyKind kind, const UniverseSnapshot& snapshot,
                                 const RiskModel& model, const StrategyConfig& config);

/// sigma'w / sqrt(w'Vw) with sigma the model-implied volatilities.
double diversification_ratio(const RiskModel& model, const Eigen::VectorXd& w);
double portfolio_variance(const RiskModel& model, const Eigen::VectorXd& w);

/// Wraps a risk model as a QP operator (structured matvec + preconditioner).
QuadraticOperator quadratic_operator(const RiskModel& model);

/// Drops weights below kPositionThreshold and renormalizes, spreading the
/// removed mass over uncapped positions so that no weight exceeds `cap`.
Eigen::VectorXd clean_weights(Eigen::VectorXd w, double cap);

}  // namespace portrisk
