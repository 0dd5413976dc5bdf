#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "portrisk/data.hpp"

namespace portrisk {

/// Parameters of a single-factor synthetic market.
///
/// Market excess returns are i.i.d. N(0, sigma_f^2); asset i earns
/// beta_i * mkt_t + eps_it with eps_it ~ N(0, omega_i^2). Betas and idiosyncratic
/// vols are drawn uniformly from their ranges. Initial caps are log-normal and
/// drift with each asset's realized return.
struct SyntheticSpec {
  std::size_t n_assets = 1000;
  std::size_t n_months = 468;
  double sigma_f = 0.045;
  std::pair<double, double> beta_range{0.2, 1.8};
  std::pair<double, double> idio_vol_range{0.04, 0.14};
  double cap_log_mean = 8.0;
  double cap_log_sd = 1.5;
  std::uint64_t seed = 42;
  YearMonth start{1985, 1};

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct GroundTruth {
  std::vector<std::string> asset_ids;
  Eigen::VectorXd beta;
  Eigen::VectorXd idio_vol;
};

struct SyntheticData {
  ReturnsPanel panel;
  MarketSeries market;
  GroundTruth truth;
};

SyntheticData generate_synthetic_panel(const SyntheticSpec& spec);

void write_ground_truth(std::ostream& out, const GroundTruth& truth);

}  // namespace portrisk
