#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "portrisk/year_month.hpp"

namespace portrisk {

struct Observation {
  YearMonth date;
  std::string asset_id;
  double excess_return = 0.0;  // monthly decimal fraction
  double market_cap = 0.0;

  bool operator==(const Observation&) const = default;
};

/// Long-format monthly panel of per-asset excess returns and market caps.
///
/// Construction validates the panel (unique keys, positive caps, contiguous
/// months inside each asset's span) and sorts rows by (date, asset_id). A
/// dense date x asset grid is kept alongside the rows for O(1) lookups.
class ReturnsPanel {
 public:
  ReturnsPanel() = default;
  explicit ReturnsPanel(std::vector<Observation> rows);

  std::span<const Observation> observations() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

  YearMonth first_date() const { return first_; }
  YearMonth last_date() const { return first_ + (num_dates_ - 1); }
  int num_dates() const { return num_dates_; }

  /// Sorted unique asset ids; asset indices below refer to this order.
  const std::vector<std::string>& asset_ids() const { return assets_; }

  bool has(YearMonth date, std::size_t asset) const;
  /// NaN when the asset has no observation at `date`.
  double return_at(YearMonth date, std::size_t asset) const;
  double cap_at(YearMonth date, std::size_t asset) const;

  /// True when the asset has an observation in every month of [from, to).
  bool complete(std::size_t asset, YearMonth from, YearMonth to) const;

  /// Number of assets observed at `date`.
  std::size_t count_at(YearMonth date) const;

  bool operator==(const ReturnsPanel& other) const { return rows_ == other.rows_; }

 private:
  int date_slot(YearMonth date) const;  // -1 when outside the grid

  std::vector<Observation> rows_;
  std::vector<std::string> assets_;
  YearMonth first_;
  int num_dates_ = 0;
  Eigen::MatrixXd returns_;  // dates x assets, NaN = missing
  Eigen::MatrixXd caps_;
  // prefix_[a][k] = number of observations of asset a in the first k dates
  std::vector<std::vector<int>> prefix_;
};

/// Monthly market excess returns on a contiguous date range.
class MarketSeries {
 public:
  MarketSeries() = default;
  explicit MarketSeries(std::vector<std::pair<YearMonth, double>> rows);

  std::span<const std::pair<YearMonth, double>> rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  YearMonth first_date() const { return rows_.front().first; }
  YearMonth last_date() const { return rows_.back().first; }

  bool covers(YearMonth from, YearMonth to_inclusive) const;
  /// Throws DataError when `date` is not covered.
  double at(YearMonth date) const;
  /// Returns for months [end - len, end).
  Eigen::VectorXd window(YearMonth end, int len) const;

  bool operator==(const MarketSeries& other) const { return rows_ == other.rows_; }

 private:
  std::vector<std::pair<YearMonth, double>> rows_;
};

/// The investable universe at a rebalance date together with its trailing
/// return window. Immutable after construction.
struct UniverseSnapshot {
  YearMonth date;
  std::vector<std::string> asset_ids;
  std::vector<std::size_t> panel_index;  // positions in ReturnsPanel::asset_ids()
  Eigen::MatrixXd window;                // n x T, column j = month date - T + j
  Eigen::VectorXd caps;                  // caps at date - 1

  std::size_t size() const { return asset_ids.size(); }
};

ReturnsPanel load_returns_panel(const std::filesystem::path& path);
ReturnsPanel parse_returns_panel(std::istream& in);
MarketSeries load_market_series(const std::filesystem::path& path);
MarketSeries parse_market_series(std::istream& in);

void write_returns_panel(std::ostream& out, const ReturnsPanel& panel);
void write_market_series(std::ostream& out, const MarketSeries& market);

/// Selects the `n` largest assets (by cap at date - 1) among those with a
/// complete `window_len`-month history ending at date - 1. Order is by
/// descending cap with ties broken by asset id. Nothing at or after `date`
/// is read.
UniverseSnapshot select_universe(const ReturnsPanel& panel, YearMonth date, int window_len,
                                 std::size_t n);

/// Number of assets eligible for selection at `date`.
std::size_t count_eligible(const ReturnsPanel& panel, YearMonth date, int window_len);

/// Shortest round-trip decimal text for a double ("NaN" for NaN).
std::string format_double(double value);

}  // namespace portrisk
