#pragma once

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

#include "portrisk/data.hpp"
#include "portrisk/risk_models.hpp"
#include "portrisk/strategies.hpp"
#include "portrisk/year_month.hpp"

namespace portrisk {

/// Half-open backtest period [start, end): month `end` belongs to the next one.
struct PeriodSpec {
  std::string name;   // identifier used in file names
  std::string label;  // display name for chart titles; empty means `name`
  YearMonth start;
  YearMonth end;

  const std::string& title() const { return label.empty() ? name : label; }
  bool operator==(const PeriodSpec&) const = default;
};

/// DotCom 1990-01..2000-03, GFC ..2008-09, Covid ..2020-04, PostCovid ..2023-12.
std::vector<PeriodSpec> default_periods();

struct EngineConfig {
  int window_len = 60;
  std::size_t universe_size = 1000;
  StrategyConfig strategy;
  RiskModelOptions risk;
  unsigned workers = 1;  // rebalance dates solved concurrently
};

/// Weights chosen at one rebalance date. Ids are shared between all
/// portfolios built on the same universe.
struct Rebalance {
  YearMonth date;
  std::shared_ptr<const std::vector<std::string>> asset_ids;
  Eigen::VectorXd w;

  std::size_t positions() const;
  double effective_n() const;
};

struct BacktestResult {
  PeriodSpec period;
  ModelKind model = ModelKind::SingleFactor;
  StrategyKind strategy = StrategyKind::EqualWeighted;
  std::vector<YearMonth> dates;
  std::vector<double> monthly_returns;  // realized at dates[k] with weights_history[k]
  std::vector<Rebalance> weights_history;
  bool failed = false;  // unsupported model/strategy combination
  std::string failure_reason;
};

/// Checks that panel and market cover [start - window_len, end).
void check_coverage(const ReturnsPanel& panel, const MarketSeries& market, const PeriodSpec& period,
                    int window_len);

/// Realized excess return of `w` over month `date`. An asset without an
/// observation that month (delisted) contributes zero.
double realized_return(const ReturnsPanel& panel, const UniverseSnapshot& snapshot,
                       const Eigen::VectorXd& w, YearMonth date);

/// One (model, strategy) combination over one period. Throws SolverError on a
/// solver failure other than the documented non-positive-definite case,
/// which marks the result failed instead.
BacktestResult run_backtest(const ReturnsPanel& panel, const MarketSeries& market,
                            const PeriodSpec& period, ModelKind model, StrategyKind strategy,
                            const EngineConfig& config);

struct MatrixResult {
  /// Ordered by period, then model, then strategy (in the order requested).
  std::vector<BacktestResult> results;
  /// Hard failures (not the non-positive-definite convention), one line each.
  std::vector<std::string> errors;
  /// Dominance checks that did not hold, one line each.
  std::vector<std::string> diagnostics;
};

/// Every (period x model x strategy) combination. Universe selection and
/// model estimation happen once per date and model; benchmark portfolios are
/// shared between models. Dates are processed by `config.workers` threads;
/// the result does not depend on the worker count.
MatrixResult run_matrix(const ReturnsPanel& panel, const MarketSeries& market,
                        const std::vector<PeriodSpec>& periods, const std::vector<ModelKind>& models,
                        const std::vector<StrategyKind>& strategies, const EngineConfig& config);

}  // namespace portrisk
