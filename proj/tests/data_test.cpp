#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "portrisk/data.hpp"
#include "portrisk/errors.hpp"
#include "portrisk/synthetic.hpp"
#include "support.hpp"

using namespace portrisk;
namespace ts = testing_support;

namespace {

// Panel of `caps.size()` assets over `months` months, asset i with constant
// cap caps[i] and return 0.001 * (i + 1) + 0.0001 * t.
ReturnsPanel toy_panel(const std::vector<double>& caps, int months, YearMonth start = YearMonth(2010, 1)) {
  std::vector<Observation> rows;
  const auto names = ts::ids(caps.size());
  for (int t = 0; t < months; ++t) {
    for (std::size_t i = 0; i < caps.size(); ++i) {
      rows.push_back({start + t, names[i], 0.001 * static_cast<double>(i + 1) + 0.0001 * t, caps[i]});
    }
  }
  return ReturnsPanel(std::move(rows));
}

std::string expect_data_error(const std::string& csv, bool market = false) {
  std::istringstream in(csv);
  try {
    if (market) parse_market_series(in);
    else parse_returns_panel(in);
  } catch (const DataError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no DataError for input:\n" << csv;
  return {};
}

}  // namespace

TEST(YearMonth, ParsesFormatsAndCounts) {
  const YearMonth a = YearMonth::parse("1999-12");
  EXPECT_EQ(a.year(), 1999);
  EXPECT_EQ(a.month(), 12);
  EXPECT_EQ((a + 1).str(), "2000-01");
  EXPECT_EQ((a - 12).str(), "1998-12");
  EXPECT_EQ(YearMonth(2000, 3) - YearMonth(1990, 1), 122);
  EXPECT_LT(YearMonth(2000, 1), YearMonth(2000, 2));
  for (const char* bad : {"1999-13", "1999-00", "199912", "1999-1", "abcd-ef", "1999-12-01", ""}) {
    EXPECT_THROW(YearMonth::parse(bad), std::invalid_argument) << bad;
  }
}

TEST(ReturnsPanelLoad, ThreeWellFormedRows) {
  std::istringstream in(
      "date,asset_id,excess_return,market_cap\n"
      "2020-01,AAPL,0.01,100\n"
      "2020-01,MSFT,-0.02,90\n"
      "2020-02,AAPL,0.03,101\n");
  const ReturnsPanel p = parse_returns_panel(in);
  EXPECT_EQ(p.size(), 3u);
  EXPECT_EQ(p.asset_ids(), (std::vector<std::string>{"AAPL", "MSFT"}));
  EXPECT_DOUBLE_EQ(p.return_at(YearMonth(2020, 2), 0), 0.03);
  EXPECT_TRUE(std::isnan(p.return_at(YearMonth(2020, 2), 1)));
  EXPECT_EQ(p.count_at(YearMonth(2020, 1)), 2u);
}

TEST(ReturnsPanelLoad, RowsAreSortedByDateThenAsset) {
  std::istringstream in(
      "date,asset_id,excess_return,market_cap\n"
      "2020-02,B,0.0,1\n"
      "2020-01,B,0.0,1\n"
      "2020-01,A,0.0,1\n");
  const ReturnsPanel panel = parse_returns_panel(in);
  const auto rows = panel.observations();
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].asset_id, "A");
  EXPECT_EQ(rows[1].asset_id, "B");
  EXPECT_EQ(rows[2].date, YearMonth(2020, 2));
}

TEST(ReturnsPanelLoad, DuplicateKeyNamesThePair) {
  const auto msg = expect_data_error(
      "date,asset_id,excess_return,market_cap\n"
      "2020-01,AAPL,0.01,100\n"
      "2020-01,AAPL,0.02,100\n");
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
  EXPECT_NE(msg.find("2020-01"), std::string::npos) << msg;
  EXPECT_NE(msg.find("AAPL"), std::string::npos) << msg;
}

TEST(ReturnsPanelLoad, NegativeCapRejected) {
  const auto msg = expect_data_error(
      "date,asset_id,excess_return,market_cap\n"
      "2020-01,AAPL,0.01,-5\n");
  EXPECT_NE(msg.find("market_cap"), std::string::npos) << msg;
}

TEST(ReturnsPanelLoad, MalformedRowReportsLineNumber) {
  const auto msg = expect_data_error(
      "date,asset_id,excess_return,market_cap\n"
      "2020-01,AAPL,0.01,100\n"
      "2020-02,AAPL,oops,100\n");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  const auto msg2 = expect_data_error(
      "date,asset_id,excess_return,market_cap\n"
      "2020-01,AAPL,0.01\n");
  EXPECT_NE(msg2.find("line 2"), std::string::npos) << msg2;
}

TEST(ReturnsPanelLoad, GapInsideAssetSpanRejected) {
  const auto msg = expect_data_error(
      "date,asset_id,excess_return,market_cap\n"
      "2020-01,AAPL,0.01,100\n"
      "2020-03,AAPL,0.01,100\n");
  EXPECT_NE(msg.find("2020-02"), std::string::npos) << msg;
}

TEST(ReturnsPanelLoad, WrongHeaderAndEmptyInput) {
  EXPECT_NE(expect_data_error("date,id,ret,cap\n2020-01,A,0.1,1\n").find("header"), std::string::npos);
  EXPECT_NE(expect_data_error("").find("empty"), std::string::npos);
  EXPECT_NE(expect_data_error("date,asset_id,excess_return,market_cap\n").find("empty"), std::string::npos);
}

TEST(MarketSeriesLoad, TwelveContiguousMonths) {
  std::ostringstream csv;
  csv << "date,market_excess_return\n";
  for (int m = 1; m <= 12; ++m) csv << YearMonth(2020, m).str() << "," << 0.001 * m << "\n";
  std::istringstream in(csv.str());
  const MarketSeries s = parse_market_series(in);
  EXPECT_EQ(s.size(), 12u);
  EXPECT_DOUBLE_EQ(s.at(YearMonth(2020, 5)), 0.005);
  EXPECT_TRUE(s.covers(YearMonth(2020, 1), YearMonth(2020, 12)));
  EXPECT_FALSE(s.covers(YearMonth(2019, 12), YearMonth(2020, 12)));
  const Eigen::VectorXd w = s.window(YearMonth(2020, 6), 3);
  EXPECT_DOUBLE_EQ(w(0), 0.003);
  EXPECT_DOUBLE_EQ(w(2), 0.005);
  EXPECT_THROW(s.at(YearMonth(2021, 1)), DataError);
}

TEST(MarketSeriesLoad, GapNamesTheMissingMonth) {
  const auto msg = expect_data_error("date,market_excess_return\n2020-01,0.01\n2020-03,0.02\n", true);
  EXPECT_NE(msg.find("gap"), std::string::npos) << msg;
  EXPECT_NE(msg.find("2020-02"), std::string::npos) << msg;
}

TEST(MarketSeriesLoad, DuplicateDateAndEmptyInput) {
  EXPECT_NE(expect_data_error("date,market_excess_return\n2020-01,0.01\n2020-01,0.02\n", true).find("duplicate"),
            std::string::npos);
  EXPECT_NE(expect_data_error("", true).find("empty"), std::string::npos);
}

TEST(ReturnsPanelRoundTrip, WriteThenParseIsIdentical) {
  SyntheticSpec spec;
  spec.n_assets = 30;
  spec.n_months = 40;
  spec.seed = 11;
  const auto data = generate_synthetic_panel(spec);
  std::stringstream buf;
  write_returns_panel(buf, data.panel);
  const ReturnsPanel back = parse_returns_panel(buf);
  EXPECT_TRUE(back == data.panel);

  std::stringstream mbuf;
  write_market_series(mbuf, data.market);
  EXPECT_TRUE(parse_market_series(mbuf) == data.market);
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 123456789.0, 1e300}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::nan("")), "NaN");
}

TEST(SelectUniverse, LargestCapsInDescendingOrder) {
  const ReturnsPanel p = toy_panel({5.0, 50.0, 20.0, 40.0, 1.0}, 30);
  const auto snap = select_universe(p, YearMonth(2010, 1) + 24, 24, 3);
  EXPECT_EQ(snap.asset_ids, (std::vector<std::string>{"A0001", "A0003", "A0002"}));
  EXPECT_DOUBLE_EQ(snap.caps(0), 50.0);
  EXPECT_EQ(snap.window.rows(), 3);
  EXPECT_EQ(snap.window.cols(), 24);
}

TEST(SelectUniverse, CapTiesBrokenByAssetId) {
  const ReturnsPanel p = toy_panel({7.0, 7.0, 7.0, 1.0}, 30);
  const auto snap = select_universe(p, YearMonth(2010, 1) + 24, 24, 2);
  EXPECT_EQ(snap.asset_ids, (std::vector<std::string>{"A0000", "A0001"}));
}

TEST(SelectUniverse, WindowHoldsTheMonthsBeforeTheDate) {
  const ReturnsPanel p = toy_panel({3.0, 2.0, 1.0}, 40);
  const YearMonth date = YearMonth(2010, 1) + 30;
  const auto snap = select_universe(p, date, 24, 3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 24; ++j) {
      const double expected = 0.001 * static_cast<double>(i + 1) + 0.0001 * static_cast<double>(30 - 24 + j);
      EXPECT_DOUBLE_EQ(snap.window(i, j), expected);
    }
  }
}

TEST(SelectUniverse, CapsAreTakenTheMonthBeforeTheDate) {
  // asset B overtakes A exactly at the rebalance date
  std::vector<Observation> rows;
  for (int t = 0; t < 30; ++t) {
    const YearMonth d = YearMonth(2010, 1) + t;
    rows.push_back({d, "A", 0.01, 10.0});
    rows.push_back({d, "B", 0.02, t >= 24 ? 100.0 : 5.0});
    rows.push_back({d, "C", 0.03, 1.0});
  }
  const ReturnsPanel p(std::move(rows));
  const auto snap = select_universe(p, YearMonth(2010, 1) + 24, 24, 2);
  EXPECT_EQ(snap.asset_ids, (std::vector<std::string>{"A", "B"}));
  EXPECT_DOUBLE_EQ(snap.caps(1), 5.0);
}

TEST(SelectUniverse, IncompleteHistoryIsIneligible) {
  // "LATE" starts trading 6 months before the date: missing t-7 and earlier
  std::vector<Observation> rows;
  const YearMonth date = YearMonth(2015, 1);
  for (int t = -60; t < 3; ++t) {
    rows.push_back({date + t, "A", 0.01, 1.0});
    rows.push_back({date + t, "B", 0.01, 2.0});
    if (t >= -6) rows.push_back({date + t, "LATE", 0.01, 1000.0});
  }
  const ReturnsPanel p(std::move(rows));
  EXPECT_EQ(count_eligible(p, date, 60), 2u);
  const auto snap = select_universe(p, date, 60, 2);
  EXPECT_EQ(snap.asset_ids, (std::vector<std::string>{"B", "A"}));
}

TEST(SelectUniverse, InsufficientUniverseReportsEligibleCount) {
  SyntheticSpec spec;
  spec.n_assets = 800;
  spec.n_months = 61;
  const auto data = generate_synthetic_panel(spec);
  try {
    select_universe(data.panel, spec.start + 60, 60, 1000);
    FAIL() << "expected InsufficientUniverseError";
  } catch (const InsufficientUniverseError& e) {
    EXPECT_EQ(e.eligible(), 800u);
    EXPECT_NE(std::string(e.what()).find("800"), std::string::npos);
  }
}

TEST(SelectUniverse, NoLookAheadUnderMutation) {
  SyntheticSpec spec;
  spec.n_assets = 60;
  spec.n_months = 90;
  spec.seed = 5;
  const auto data = generate_synthetic_panel(spec);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> junk(-0.5, 0.5), cap(1.0, 1e9);
  for (int k : {60, 71, 89}) {
    const YearMonth date = spec.start + k;
    std::vector<Observation> mutated(data.panel.observations().begin(), data.panel.observations().end());
    for (auto& o : mutated) {
      if (o.date >= date) {
        o.excess_return = junk(rng);
        o.market_cap = cap(rng);
      }
    }
    const ReturnsPanel other(std::move(mutated));
    const auto a = select_universe(data.panel, date, 60, 40);
    const auto b = select_universe(other, date, 60, 40);
    EXPECT_EQ(a.asset_ids, b.asset_ids);
    EXPECT_TRUE(a.window == b.window);
    EXPECT_TRUE(a.caps == b.caps);
  }
}

TEST(SelectUniverse, RepeatedCallsAgree) {
  SyntheticSpec spec;
  spec.n_assets = 50;
  spec.n_months = 70;
  const auto data = generate_synthetic_panel(spec);
  const auto a = select_universe(data.panel, spec.start + 65, 60, 30);
  const auto b = select_universe(data.panel, spec.start + 65, 60, 30);
  EXPECT_EQ(a.asset_ids, b.asset_ids);
  EXPECT_TRUE(a.window == b.window);
}

TEST(Synthetic, SameSeedSameBytes) {
  SyntheticSpec spec;
  spec.n_assets = 25;
  spec.n_months = 50;
  spec.seed = 7;
  auto text = [&] {
    const auto d = generate_synthetic_panel(spec);
    std::ostringstream out;
    write_returns_panel(out, d.panel);
    write_market_series(out, d.market);
    write_ground_truth(out, d.truth);
    return out.str();
  };
  EXPECT_EQ(text(), text());
  spec.seed = 8;
  const auto other = generate_synthetic_panel(spec);
  spec.seed = 7;
  EXPECT_FALSE(other.panel == generate_synthetic_panel(spec).panel);
}

TEST(Synthetic, DegenerateSpecsRejected) {
  SyntheticSpec spec;
  spec.n_months = 1;
  EXPECT_THROW(generate_synthetic_panel(spec), std::invalid_argument);
  spec = {};
  spec.n_assets = 1;
  EXPECT_THROW(generate_synthetic_panel(spec), std::invalid_argument);
  spec = {};
  spec.beta_range = {2.0, 1.0};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = {};
  spec.idio_vol_range = {0.0, 0.1};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

namespace {

struct Ols {
  double beta;
  double se;
};

// slope and its standard error, from the textbook formulas
Ols ols(const std::vector<double>& y, const std::vector<double>& x) {
  const double n = static_cast<double>(y.size());
  double sx = 0, sy = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    sx += x[k];
    sy += y[k];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  const double beta = sxy / sxx;
  double rss = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double e = (y[k] - my) - beta * (x[k] - mx);
    rss += e * e;
  }
  return {beta, std::sqrt(rss / (n - 2.0) / sxx)};
}

}  // namespace

TEST(Synthetic, BetasRecoveredWithinThreeStandardErrors) {
  SyntheticSpec spec;
  spec.n_assets = 40;
  spec.n_months = 600;
  spec.seed = 21;
  const auto data = generate_synthetic_panel(spec);
  std::vector<double> mkt;
  for (const auto& [d, r] : data.market.rows()) mkt.push_back(r);
  int outside = 0;
  for (std::size_t a = 0; a < spec.n_assets; ++a) {
    std::vector<double> y;
    for (YearMonth t = data.panel.first_date(); t <= data.panel.last_date(); ++t) y.push_back(data.panel.return_at(t, a));
    const Ols fit = ols(y, mkt);
    if (std::abs(fit.beta - data.truth.beta(static_cast<Eigen::Index>(a))) > 3.0 * fit.se) ++outside;
  }
  // 3-sigma band: about 0.3% misses expected, allow one
  EXPECT_LE(outside, 1);
}

TEST(Synthetic, PerfectlyCorrelatedAssetsHaveUnitBeta) {
  SyntheticSpec spec;
  spec.n_assets = 10;
  spec.n_months = 600;
  spec.beta_range = {1.0, 1.0};
  spec.idio_vol_range = {0.0001, 0.0001};
  const auto data = generate_synthetic_panel(spec);
  std::vector<double> mkt;
  for (const auto& [d, r] : data.market.rows()) mkt.push_back(r);
  for (std::size_t a = 0; a < spec.n_assets; ++a) {
    std::vector<double> y;
    for (YearMonth t = data.panel.first_date(); t <= data.panel.last_date(); ++t) y.push_back(data.panel.return_at(t, a));
    EXPECT_NEAR(ols(y, mkt).beta, 1.0, 0.05);
  }
}
