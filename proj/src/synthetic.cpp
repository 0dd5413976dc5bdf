#include "portrisk/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>

namespace portrisk {

void SyntheticSpec::validate() const {
  if (n_assets < 2) throw std::invalid_argument("n_assets must be at least 2");
  if (n_months < 2) throw std::invalid_argument("n_months must be at least 2");
  if (!(sigma_f > 0.0)) throw std::invalid_argument("sigma_f must be positive");
  if (!(beta_range.first <= beta_range.second)) {
    throw std::invalid_argument("beta_range must satisfy low <= high");
  }
  if (!(idio_vol_range.first <= idio_vol_range.second)) {
    throw std::invalid_argument("idio_vol_range must satisfy low <= high");
  }
  if (!(idio_vol_range.first > 0.0)) throw std::invalid_argument("idio_vol_range must be positive");
  if (!(cap_log_sd >= 0.0)) throw std::invalid_argument("cap_log_sd must be non-negative");
}

SyntheticData generate_synthetic_panel(const SyntheticSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n_assets);
  std::mt19937_64 rng(spec.seed);

  auto uniform = [&](std::pair<double, double> range) {
    if (range.first == range.second) return range.first;
    return std::uniform_real_distribution<double>(range.first, range.second)(rng);
  };

  GroundTruth truth;
  truth.beta.resize(n);
  truth.idio_vol.resize(n);
  Eigen::VectorXd caps(n);
  const int width = std::max(4, static_cast<int>(std::to_string(spec.n_assets).size()));
  std::normal_distribution<double> std_normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::string id = std::to_string(i + 1);
    if (static_cast<int>(id.size()) < width) id.insert(0, static_cast<std::size_t>(width) - id.size(), '0');
    truth.asset_ids.push_back("S" + id);
    truth.beta(i) = uniform(spec.beta_range);
    truth.idio_vol(i) = uniform(spec.idio_vol_range);
    caps(i) = std::exp(spec.cap_log_mean + spec.cap_log_sd * std_normal(rng));
  }

  std::vector<std::pair<YearMonth, double>> market_rows;
  std::vector<Observation> rows;
  market_rows.reserve(spec.n_months);
  rows.reserve(spec.n_months * spec.n_assets);
  for (std::size_t t = 0; t < spec.n_months; ++t) {
    const YearMonth date = spec.start + static_cast<int>(t);
    const double mkt = spec.sigma_f * std_normal(rng);
    market_rows.emplace_back(date, mkt);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = truth.beta(i) * mkt + truth.idio_vol(i) * std_normal(rng);
      // caps drift with the asset's own return; floor keeps them positive
      caps(i) = std::max(caps(i) * (1.0 + r), 1e-6);
      rows.push_back({date, truth.asset_ids[static_cast<std::size_t>(i)], r, caps(i)});
    }
  }
  return {ReturnsPanel(std::move(rows)), MarketSeries(std::move(market_rows)), std::move(truth)};
}

void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
  out << "asset_id,beta,idio_vol\n";
  for (std::size_t i = 0; i < truth.asset_ids.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << truth.asset_ids[i] << ',' << format_double(truth.beta(k)) << ','
        << format_double(truth.idio_vol(k)) << '\n';
  }
}

}  // namespace portrisk
