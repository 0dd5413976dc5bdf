#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

#include "portrisk/backtest.hpp"
#include "portrisk/data.hpp"

namespace portrisk {

/// One column of a results table. Returns are annualized (x12 for means,
/// x sqrt(12) for volatility).
struct MetricsRow {
  double avg_excess_return = 0.0;
  double std_dev = 0.0;
  double sharpe = 0.0;
  double market_beta = 0.0;
  double avg_positions = 0.0;
  double effective_n = 0.0;

  static MetricsRow nan();
  bool is_nan() const;
};

/// Minimum number of monthly observations for compute_metrics.
inline constexpr std::size_t kMinObservations = 12;

/// The portfolio's returns have zero sample variance.
class SharpeUndefinedError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Failed results give a NaN row. Throws DataError with fewer than 12
/// observations or when the market series misses a date, and
/// SharpeUndefinedError when the returns are constant.
MetricsRow compute_metrics(const BacktestResult& result, const MarketSeries& market);

/// Inverse Herfindahl 1 / sum w_i^2.
double effective_n(const Eigen::VectorXd& w);

}  // namespace portrisk
