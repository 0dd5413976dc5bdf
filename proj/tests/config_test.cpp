#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "portrisk/config.hpp"
#include "portrisk/errors.hpp"
#include "support.hpp"

using namespace portrisk;
namespace ts = testing_support;

namespace {

RunConfig parse(const std::string& text, const std::filesystem::path& base = "/tmp") {
  std::istringstream in(text);
  return parse_run_config(in, base);
}

std::vector<std::string> problems_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  ADD_FAILURE() << "no ConfigError for:\n" << text;
  return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
  for (const auto& p : problems) {
    if (p.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
  const RunConfig c = parse("");
  EXPECT_TRUE(c.synthetic);
  EXPECT_EQ(c.synthetic_spec.n_assets, 1000u);
  EXPECT_EQ(c.synthetic_spec.n_months, 468u);
  EXPECT_EQ(c.periods, default_periods());
  EXPECT_EQ(c.models.size(), 3u);
  EXPECT_EQ(c.strategies.size(), 5u);
  EXPECT_EQ(c.engine.window_len, 60);
  EXPECT_EQ(c.engine.universe_size, 1000u);
  EXPECT_DOUBLE_EQ(c.engine.strategy.weight_cap, 0.05);
  EXPECT_DOUBLE_EQ(c.engine.strategy.rp_upper, 5.0);
  EXPECT_DOUBLE_EQ(*c.engine.risk.shrinkage_delta, 1.0 / 3.0);
  EXPECT_FALSE(c.engine.risk.psd_repair);
  EXPECT_DOUBLE_EQ(c.engine.strategy.solver.tolerance, 1e-8);
  EXPECT_EQ(c.engine.strategy.solver.max_iterations, 50000);
}

TEST(Config, BundledDefaultMatchesBuiltIns) {
  const auto path = std::filesystem::path(PORTRISK_SOURCE_DIR) / "configs" / "default.ini";
  EXPECT_TRUE(same_run(load_run_config(path), parse("")));
}

TEST(Config, UnknownKeysAndSectionsRejected) {
  const auto p = problems_of("[universe]\nwindow = 60\n[extras]\nx = 1\n");
  EXPECT_TRUE(mentions(p, "universe.window: unknown key"));
  EXPECT_TRUE(mentions(p, "unknown section [extras]"));
}

TEST(Config, ZeroWindowNamesTheField) {
  const auto p = problems_of("[universe]\nwindow_len = 0\n");
  ASSERT_EQ(p.size(), 1u);
  EXPECT_TRUE(mentions(p, "universe.window_len"));
  EXPECT_TRUE(mentions(p, "got 0"));
}

TEST(Config, EveryProblemListed) {
  const auto p = problems_of(
      "[universe]\nwindow_len = abc\nsize = 10\n"
      "[strategy]\nweight_cap = 0.05\nstrategies = min_variance, momentum\n"
      "[riskmodel]\nshrinkage_delta = 2\n"
      "[solver]\ntolerance = -1\n");
  EXPECT_TRUE(mentions(p, "universe.window_len: 'abc' is not an integer"));
  EXPECT_TRUE(mentions(p, "strategy.weight_cap"));
  EXPECT_TRUE(mentions(p, "unknown strategy 'momentum'"));
  EXPECT_TRUE(mentions(p, "riskmodel.shrinkage_delta"));
  EXPECT_TRUE(mentions(p, "solver.tolerance"));
  EXPECT_GE(p.size(), 5u);
}

TEST(Config, MissingDataFilesReported) {
  const auto p = problems_of("[data]\nsource = files\nreturns = nope.csv\n");
  EXPECT_TRUE(mentions(p, "data.returns: no such file"));
  EXPECT_TRUE(mentions(p, "data.market: required"));
  EXPECT_TRUE(mentions(problems_of("[data]\nsource = web\n"), "data.source"));
}

TEST(Config, PeriodsWithLabels) {
  const RunConfig c = parse("[periods]\nA = 2000-01, 2001-01, First Part\nB = 2001-01, 2002-06\n");
  ASSERT_EQ(c.periods.size(), 2u);
  EXPECT_EQ(c.periods[0].title(), "First Part");
  EXPECT_EQ(c.periods[1].title(), "B");
  EXPECT_EQ(c.periods[1].end, YearMonth(2002, 6));
  EXPECT_TRUE(mentions(problems_of("[periods]\nA = 2001-01, 2000-01\n"), "start must be before end"));
  EXPECT_TRUE(mentions(problems_of("[periods]\nbad/name = 2000-01, 2001-01\n"), "periods.bad/name"));
}

TEST(Config, RelativeDataPathsResolveAgainstTheConfigDirectory) {
  ts::TempDir dir("cfg");
  ts::spit(dir.path() / "r.csv", "x");
  ts::spit(dir.path() / "m.csv", "x");
  const RunConfig c = parse("[data]\nsource = files\nreturns = r.csv\nmarket = ./m.csv\n", dir.path());
  EXPECT_EQ(c.returns_path, dir.path() / "r.csv");
  EXPECT_EQ(c.market_path, dir.path() / "m.csv");
}

TEST(Config, CanonicalEchoRoundTrips) {
  const RunConfig c = parse(
      "[synthetic]\nassets = 300\nseed = 9\nsigma_f = 0.05\n"
      "[periods]\nX = 1995-01, 1996-01, Ex Period\n"
      "[universe]\nsize = 200\n"
      "[riskmodel]\nmodels = shrunk_sample, single_factor\npsd_repair = true\n"
      "[strategy]\nstrategies = risk_parity, min_variance\nweight_cap = 0.1\n"
      "[run]\nworkers = 3\noutput_dir = /tmp/elsewhere\n"
      "[debug]\nweights = yes\n");
  const std::string echo = canonical_ini(c);
  EXPECT_EQ(echo.find("workers"), std::string::npos);
  EXPECT_EQ(echo.find("output_dir"), std::string::npos);
  const RunConfig back = parse(echo);
  EXPECT_TRUE(same_run(c, back));
  EXPECT_EQ(canonical_ini(back), echo);
  EXPECT_EQ(back.models, (std::vector<ModelKind>{ModelKind::ShrunkSample, ModelKind::SingleFactor}));
  EXPECT_TRUE(back.debug.dump_weights);

  RunConfig other = c;
  other.workers = 1;
  other.output_dir = "/somewhere/else";
  EXPECT_TRUE(same_run(c, other));
  other.engine.strategy.weight_cap = 0.2;
  EXPECT_FALSE(same_run(c, other));
}

TEST(Config, OutputDirectoryFallsBackToEnvironment) {
  ::setenv(kOutputDirEnv, "/tmp/from-env", 1);
  EXPECT_EQ(parse("").output_dir, std::filesystem::path("/tmp/from-env"));
  EXPECT_EQ(parse("[run]\noutput_dir = /tmp/explicit\n").output_dir, std::filesystem::path("/tmp/explicit"));
  ::unsetenv(kOutputDirEnv);
  EXPECT_EQ(parse("").output_dir.filename(), "portrisk-output");
}
