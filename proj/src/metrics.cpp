#include "portrisk/metrics.hpp"

#include <cmath>
#include <limits>

#include "portrisk/errors.hpp"

namespace portrisk {

MetricsRow MetricsRow::nan() {
  const double q = std::numeric_limits<double>::quiet_NaN();
  return {q, q, q, q, q, q};
}

bool MetricsRow::is_nan() const {
  return std::isnan(avg_excess_return) && std::isnan(std_dev) && std::isnan(sharpe) &&
         std::isnan(market_beta) && std::isnan(avg_positions) && std::isnan(effective_n);
}

double effective_n(const Eigen::VectorXd& w) {
  const double h = w.squaredNorm();
  if (!(h > 0.0)) throw std::invalid_argument("effective_n: weights are all zero");
  return 1.0 / h;
}

MetricsRow compute_metrics(const BacktestResult& result, const MarketSeries& market) {
  if (result.failed) return MetricsRow::nan();
  const std::size_t m = result.monthly_returns.size();
  if (m < kMinObservations) {
    throw DataError("metrics need at least " + std::to_string(kMinObservations) + " monthly returns, got " +
                    std::to_string(m));
  }
  const auto mm = static_cast<Eigen::Index>(m);
  Eigen::VectorXd r(mm), f(mm);
  for (Eigen::Index t = 0; t < mm; ++t) {
    r(t) = result.monthly_returns[static_cast<std::size_t>(t)];
    f(t) = market.at(result.dates[static_cast<std::size_t>(t)]);
  }
  const double mean_r = r.mean();
  const double mean_f = f.mean();
  const Eigen::VectorXd dr = r.array() - mean_r;
  const Eigen::VectorXd df = f.array() - mean_f;
  const double var_r = dr.squaredNorm() / static_cast<double>(m - 1);
  if (!(var_r > 0.0)) throw SharpeUndefinedError("portfolio returns have zero variance; Sharpe ratio undefined");

  MetricsRow row;
  row.avg_excess_return = 12.0 * mean_r;
  row.std_dev = std::sqrt(12.0) * std::sqrt(var_r);
  row.sharpe = row.avg_excess_return / row.std_dev;
  const double var_f = df.squaredNorm();
  row.market_beta = var_f > 0.0 ? dr.dot(df) / var_f : std::numeric_limits<double>::quiet_NaN();

  double positions = 0.0, eff = 0.0;
  for (const auto& reb : result.weights_history) {
    positions += static_cast<double>(reb.positions());
    eff += reb.effective_n();
  }
  const auto k = static_cast<double>(result.weights_history.size());
  row.avg_positions = positions / k;
  row.effective_n = eff / k;
  return row;
}

}  // namespace portrisk
