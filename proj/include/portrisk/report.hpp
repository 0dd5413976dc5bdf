#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "portrisk/backtest.hpp"
#include "portrisk/metrics.hpp"
#include "portrisk/qp.hpp"

namespace portrisk {

/// Row labels of the metrics tables, in output order.
extern const std::vector<std::string> kMetricLabels;

/// One (period, model) table: a metrics row per strategy column.
struct TableColumn {
  StrategyKind strategy;
  MetricsRow metrics;
};

std::string metrics_file_name(const PeriodSpec& period, ModelKind model);
std::string cumret_file_name(const PeriodSpec& period, ModelKind model);
std::string chart_file_name(const PeriodSpec& period, ModelKind model);

/// Fixed-point text with 6 decimals, "NaN" for NaN.
std::string format_fixed(double value);

/// Rows = metrics, columns = strategies.
void write_metrics_csv(std::ostream& out, const std::vector<TableColumn>& columns);

/// Cumulative compounded excess return prod(1 + r) - 1 after each month.
std::vector<double> cumulative_returns(const std::vector<double>& monthly);

/// date column then one column per result (NaN for failed ones). All
/// results must share the same period.
void write_cumret_csv(std::ostream& out, const std::vector<const BacktestResult*>& results);

/// "<model title> – Portfolios Comparison – <period title>"
std::string chart_title(const PeriodSpec& period, ModelKind model);

/// Line chart of cumulative returns, one polyline per non-failed result.
void write_chart_svg(std::ostream& out, const std::string& title,
                     const std::vector<const BacktestResult*>& results);

/// period,model,strategy,avg_excess_return,std_dev,sharpe for every cell.
struct SurfaceRow {
  std::string period;
  ModelKind model;
  StrategyKind strategy;
  MetricsRow metrics;
};
void write_surface_csv(std::ostream& out, const std::vector<SurfaceRow>& rows);

/// date,asset_id,weight for every position above the threshold.
void write_weights_csv(std::ostream& out, const BacktestResult& result);

void write_trace_csv(std::ostream& out, const std::vector<QpTraceRow>& trace);

/// Hex SHA-256 of a file's bytes or of a string.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_text(const std::string& text);

/// Minimal escaping for XML text and attribute values.
std::string xml_escape(const std::string& text);

}  // namespace portrisk
