#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "portrisk/errors.hpp"
#include "portrisk/metrics.hpp"
#include "portrisk/strategies.hpp"
#include "portrisk/synthetic.hpp"
#include "support.hpp"

using namespace portrisk;
namespace ts = testing_support;

namespace {

StrategyConfig uncapped() {
  StrategyConfig c;
  c.weight_cap = 1.0;
  c.rp_upper = 1e6;
  return c;
}

// Snapshot of the largest `n` assets of a synthetic market, with its market window.
struct Fixture {
  UniverseSnapshot snap;
  Eigen::VectorXd market_window;
};

Fixture synthetic_fixture(std::size_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_assets = n + 20;
  spec.n_months = 61;
  spec.seed = seed;
  const auto data = generate_synthetic_panel(spec);
  const YearMonth date = spec.start + 60;
  return {select_universe(data.panel, date, 60, n), data.market.window(date, 60)};
}

void expect_long_only_capped(const Eigen::VectorXd& w, double cap) {
  EXPECT_NEAR(w.sum(), 1.0, 1e-9);
  EXPECT_GE(w.minCoeff(), 0.0);
  EXPECT_LE(w.maxCoeff(), cap + 1e-9);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    EXPECT_TRUE(w(i) == 0.0 || w(i) >= kPositionThreshold);
  }
}

}  // namespace

TEST(Names, SlugsTitlesAndParsing) {
  EXPECT_EQ(strategy_title(StrategyKind::MinimumVariance), "Minimum Variance");
  EXPECT_EQ(strategy_title(StrategyKind::ValueWeighted), "Market (Value-Weighted)");
  for (StrategyKind k : kAllStrategies) EXPECT_EQ(parse_strategy_kind(strategy_slug(k)), k);
  EXPECT_FALSE(parse_strategy_kind("momentum"));
  EXPECT_TRUE(is_benchmark(StrategyKind::EqualWeighted));
  EXPECT_FALSE(is_benchmark(StrategyKind::RiskParity));
}

TEST(EqualWeight, UniformWeights) {
  for (Eigen::Index n : {1, 4, 1000}) {
    const auto w = equal_weight(ts::snapshot(Eigen::MatrixXd::Zero(n, 3))).w;
    EXPECT_TRUE((w.array() == 1.0 / static_cast<double>(n)).all());
    EXPECT_NEAR(effective_n(w), static_cast<double>(n), 1e-9);
  }
}

TEST(ValueWeight, ProportionalToCaps) {
  const auto w = value_weight(ts::snapshot(Eigen::MatrixXd::Zero(2, 3), Eigen::Vector2d(3.0, 1.0))).w;
  EXPECT_DOUBLE_EQ(w(0), 0.75);
  EXPECT_DOUBLE_EQ(w(1), 0.25);
  const auto eq = value_weight(ts::snapshot(Eigen::MatrixXd::Zero(5, 3), Eigen::VectorXd::Constant(5, 7.0))).w;
  EXPECT_NEAR(effective_n(eq), 5.0, 1e-12);
  const auto skew = value_weight(ts::snapshot(Eigen::MatrixXd::Zero(3, 3), Eigen::Vector3d(98.0, 1.0, 1.0))).w;
  EXPECT_NEAR(effective_n(skew), 1.0 / (0.98 * 0.98 + 2e-4), 1e-12);
  EXPECT_NEAR(effective_n(skew), 1.041, 1e-3);
}

TEST(MinVariance, IdentityGivesEqualWeights) {
  const auto w = min_variance(ts::dense_model(Eigen::MatrixXd::Identity(8, 8)), uncapped()).w;
  EXPECT_LT((w.array() - 0.125).abs().maxCoeff(), 1e-8);
}

TEST(MinVariance, DiagonalGivesInverseVariance) {
  const Eigen::Vector4d sigma(0.05, 0.1, 0.2, 0.08);
  const Eigen::VectorXd inv = sigma.cwiseAbs2().cwiseInverse();
  const auto w = min_variance(ts::diagonal_model(sigma), uncapped()).w;
  EXPECT_LT(ts::max_rel_diff(w, inv / inv.sum()), 1e-7);
}

TEST(MinVariance, CorrelatedTripleAgainstGrid) {
  Eigen::Matrix3d c;
  c << 1.0, 0.9, 0.9, 0.9, 1.0, 0.9, 0.9, 0.9, 1.0;
  const Eigen::Vector3d s(0.04, 0.05, 0.07);
  const Eigen::MatrixXd v = s.asDiagonal() * c * s.asDiagonal();
  const auto w = min_variance(ts::dense_model(v), uncapped()).w;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 1000; ++i) {
    for (int j = 0; i + j <= 1000; ++j) {
      const Eigen::Vector3d x(i / 1000.0, j / 1000.0, (1000 - i - j) / 1000.0);
      best = std::min(best, x.dot(v * x));
    }
  }
  EXPECT_LE(w.dot(v * w), best + 1e-12);
  EXPECT_GE(w.dot(v * w), best - 1e-6);
}

TEST(MaxDiversification, DiagonalGivesInverseVolatility) {
  const Eigen::Vector4d sigma(0.05, 0.1, 0.2, 0.08);
  const auto model = ts::diagonal_model(sigma);
  const auto w = max_diversification(model, implied_volatilities(model), uncapped()).w;
  const Eigen::VectorXd inv = sigma.cwiseInverse();
  EXPECT_LT(ts::max_rel_diff(w, inv / inv.sum()), 1e-6);
}

TEST(MaxDiversification, IdenticalAssetsGiveUnitRatio) {
  // perfectly correlated, equal volatility: every portfolio has ratio 1
  const Eigen::MatrixXd v = Eigen::MatrixXd::Constant(4, 4, 0.01) + 1e-10 * Eigen::MatrixXd::Identity(4, 4);
  const auto model = ts::dense_model(v);
  const auto w = max_diversification(model, implied_volatilities(model), uncapped()).w;
  EXPECT_NEAR(diversification_ratio(model, w), 1.0, 1e-6);
}

TEST(MaxDiversification, BeatsRandomPortfolios) {
  std::mt19937_64 rng(17);
  const Eigen::MatrixXd v = 0.01 * ts::random_spd(6, rng, 0.1, 2.0);
  const auto model = ts::dense_model(v);
  const auto w = max_diversification(model, implied_volatilities(model), uncapped()).w;
  const double best = diversification_ratio(model, w);
  std::exponential_distribution<double> e(1.0);
  for (int k = 0; k < 10000; ++k) {
    Eigen::VectorXd x(6);
    for (Eigen::Index i = 0; i < 6; ++i) x(i) = e(rng);
    x /= x.sum();
    ASSERT_LE(diversification_ratio(model, x), best + 1e-9);
  }
}

TEST(RiskParity, DiagonalGivesInverseVolatility) {
  const Eigen::Vector4d sigma(0.05, 0.1, 0.2, 0.08);
  const auto w = risk_parity(ts::diagonal_model(sigma), uncapped()).w;
  const Eigen::VectorXd inv = sigma.cwiseInverse();
  EXPECT_LT(ts::max_rel_diff(w, inv / inv.sum()), 1e-7);
  const auto eq = risk_parity(ts::dense_model(Eigen::MatrixXd::Identity(5, 5)), uncapped()).w;
  EXPECT_LT((eq.array() - 0.2).abs().maxCoeff(), 1e-9);
}

TEST(RiskParity, EqualRiskContributions) {
  std::mt19937_64 rng(18);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd v = 0.01 * ts::random_spd(5, rng, 0.2, 2.0);
    const auto w = risk_parity(ts::dense_model(v), uncapped()).w;
    const Eigen::VectorXd rc = w.cwiseProduct(v * w);
    EXPECT_LE(rc.maxCoeff() - rc.minCoeff(), 1e-6 * rc.mean());
  }
}

TEST(RiskParity, ScaleInvariant) {
  std::mt19937_64 rng(19);
  const Eigen::MatrixXd v = 0.01 * ts::random_spd(7, rng, 0.2, 2.0);
  const auto base = risk_parity(ts::dense_model(v), uncapped()).w;
  for (double c : {0.25, 4.0}) {
    const auto w = risk_parity(ts::dense_model(c * v), uncapped()).w;
    EXPECT_LT((w - base).cwiseAbs().maxCoeff(), 1e-8) << c;
  }
}

TEST(RiskParity, ShrunkModelNeedsRepair) {
  const Fixture f = synthetic_fixture(30, 3);
  RiskModelOptions opts;
  const auto raw = estimate_risk_model(ModelKind::ShrunkSample, f.snap, f.market_window, opts);
  EXPECT_THROW(risk_parity(raw, StrategyConfig{}), NotPositiveDefiniteError);
  opts.psd_repair = true;
  const auto repaired = estimate_risk_model(ModelKind::ShrunkSample, f.snap, f.market_window, opts);
  const auto w = risk_parity(repaired, StrategyConfig{}).w;
  expect_long_only_capped(w, 1.0);
}

TEST(Strategies, SimplexCapAndDiversification) {
  const Fixture f = synthetic_fixture(200, 4);
  const StrategyConfig cfg;
  for (ModelKind mk : kAllModels) {
    RiskModelOptions opts;
    opts.psd_repair = true;
    const auto model = estimate_risk_model(mk, f.snap, f.market_window, opts);
    for (StrategyKind sk : kAllStrategies) {
      const auto p = build_portfolio(sk, f.snap, model, cfg);
      EXPECT_EQ(p.asset_ids, f.snap.asset_ids);
      const double cap = (sk == StrategyKind::MinimumVariance || sk == StrategyKind::MaximumDiversification)
                             ? cfg.weight_cap
                             : 1.0;
      expect_long_only_capped(p.w, cap);
      const double positions = static_cast<double>((p.w.array() > kPositionThreshold).count());
      EXPECT_GE(positions, effective_n(p.w) - 1e-9);
      if (!is_benchmark(sk)) {
        EXPECT_GE(effective_n(p.w), 20.0) << model_slug(mk) << " " << strategy_slug(sk);
      }
    }
  }
}

TEST(Strategies, OptimizersDominateFeasibleBenchmarks) {
  const Fixture f = synthetic_fixture(100, 5);
  StrategyConfig cfg;
  const auto ew = equal_weight(f.snap).w;  // 0.01 each: inside the cap
  for (ModelKind mk : kAllModels) {
    const auto model = estimate_risk_model(mk, f.snap, f.market_window);
    const auto mv = min_variance(model, cfg).w;
    const auto md = max_diversification(model, implied_volatilities(model), cfg).w;
    EXPECT_LE(portfolio_variance(model, mv), portfolio_variance(model, ew) * (1.0 + 1e-9));
    EXPECT_LE(portfolio_variance(model, mv), portfolio_variance(model, md) * (1.0 + 1e-9));
    EXPECT_GE(diversification_ratio(model, md), diversification_ratio(model, ew) * (1.0 - 1e-9));
    EXPECT_GE(diversification_ratio(model, md), diversification_ratio(model, mv) * (1.0 - 1e-9));
  }
}

TEST(Strategies, PermutationEquivariant) {
  const Fixture f = synthetic_fixture(40, 6);
  const auto n = static_cast<Eigen::Index>(f.snap.size());
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(7);
  std::shuffle(perm.begin(), perm.end(), rng);

  UniverseSnapshot shuffled = f.snap;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = perm[static_cast<std::size_t>(i)];
    shuffled.asset_ids[static_cast<std::size_t>(i)] = f.snap.asset_ids[static_cast<std::size_t>(src)];
    shuffled.panel_index[static_cast<std::size_t>(i)] = f.snap.panel_index[static_cast<std::size_t>(src)];
    shuffled.window.row(i) = f.snap.window.row(src);
    shuffled.caps(i) = f.snap.caps(src);
  }
  StrategyConfig cfg;
  cfg.weight_cap = 0.1;
  RiskModelOptions opts;
  opts.psd_repair = true;
  for (ModelKind mk : kAllModels) {
    const auto m1 = estimate_risk_model(mk, f.snap, f.market_window, opts);
    const auto m2 = estimate_risk_model(mk, shuffled, f.market_window, opts);
    for (StrategyKind sk : kAllStrategies) {
      const auto a = build_portfolio(sk, f.snap, m1, cfg).w;
      const auto b = build_portfolio(sk, shuffled, m2, cfg).w;
      for (Eigen::Index i = 0; i < n; ++i) {
        EXPECT_NEAR(b(i), a(perm[static_cast<std::size_t>(i)]), 1e-6) << model_slug(mk) << " " << strategy_slug(sk);
      }
    }
  }
}

TEST(Strategies, SingleAssetHoldsEverything) {
  const auto model = ts::diagonal_model(Eigen::VectorXd::Constant(1, 0.1));
  const StrategyConfig cfg;
  EXPECT_EQ(min_variance(model, cfg).w(0), 1.0);
  EXPECT_EQ(max_diversification(model, Eigen::VectorXd::Constant(1, 0.1), cfg).w(0), 1.0);
  EXPECT_EQ(risk_parity(model, cfg).w(0), 1.0);
}

TEST(Strategies, InfeasibleCapRejected) {
  const auto model = ts::diagonal_model(Eigen::VectorXd::Constant(10, 0.1));
  StrategyConfig cfg;  // 10 assets x 0.05 < 1
  EXPECT_THROW(min_variance(model, cfg), StrategyError);
  EXPECT_THROW(max_diversification(model, Eigen::VectorXd::Constant(10, 0.1), cfg), StrategyError);
}

TEST(CleanWeights, DropsDustAndRenormalizes) {
  Eigen::VectorXd w(4);
  w << 0.5, 0.4999995, 5e-7, 0.0;
  const auto c = clean_weights(w, 1.0);
  EXPECT_EQ(c(2), 0.0);
  EXPECT_NEAR(c.sum(), 1.0, 1e-15);
  EXPECT_THROW(clean_weights(Eigen::VectorXd::Zero(3), 1.0), SolverError);

  // redistributed mass never pushes a capped weight over the cap
  Eigen::VectorXd capped(3);
  capped << 0.5, 0.4999995, 5e-7;
  const auto d = clean_weights(capped, 0.5);
  EXPECT_LE(d.maxCoeff(), 0.5 + 1e-15);
  EXPECT_NEAR(d.sum(), 1.0, 1e-15);
}
