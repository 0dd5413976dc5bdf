#include "portrisk/commands.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <json.hpp>
#include <openssl/opensslv.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "portrisk/backtest.hpp"
#include "portrisk/data.hpp"
#include "portrisk/errors.hpp"
#include "portrisk/metrics.hpp"
#include "portrisk/report.hpp"

#ifndef PORTRISK_VERSION
#define PORTRISK_VERSION "0.0.0"
#endif

namespace portrisk {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct LoadedData {
  ReturnsPanel panel;
  MarketSeries market;
  json description;
};

std::string serialize_panel(const ReturnsPanel& panel) {
  std::ostringstream s;
  write_returns_panel(s, panel);
  return s.str();
}

std::string serialize_market(const MarketSeries& market) {
  std::ostringstream s;
  write_market_series(s, market);
  return s.str();
}

LoadedData load_data(const RunConfig& config) {
  LoadedData d;
  if (config.synthetic) {
    SyntheticData synth = generate_synthetic_panel(config.synthetic_spec);
    d.panel = std::move(synth.panel);
    d.market = std::move(synth.market);
    d.description["source"] = "synthetic";
    d.description["returns_sha256"] = sha256_text(serialize_panel(d.panel));
    d.description["market_sha256"] = sha256_text(serialize_market(d.market));
    d.description["hash_basis"] = "canonical CSV serialization of the generated data";
  } else {
    d.panel = load_returns_panel(config.returns_path);
    d.market = load_market_series(config.market_path);
    d.description["source"] = "files";
    d.description["returns_path"] = config.returns_path.string();
    d.description["market_path"] = config.market_path.string();
    d.description["returns_sha256"] = sha256_file(config.returns_path);
    d.description["market_sha256"] = sha256_file(config.market_path);
    d.description["hash_basis"] = "file bytes";
  }
  d.description["observations"] = d.panel.size();
  d.description["assets"] = d.panel.asset_ids().size();
  d.description["first_date"] = d.panel.first_date().str();
  d.description["last_date"] = d.panel.last_date().str();
  return d;
}

void write_file(const fs::path& path, const std::string& content, std::vector<std::string>& written) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
  written.push_back(path.filename().string());
}

template <class Fn>
std::string render(Fn&& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

// Covariance and solver-trace dumps at the first rebalance date of each period.
void write_debug_dumps(const RunConfig& config, const LoadedData& data, const fs::path& dir,
                       std::vector<std::string>& written) {
  const auto& e = config.engine;
  for (const auto& period : config.periods) {
    const YearMonth date = period.start;
    const UniverseSnapshot snap = select_universe(data.panel, date, e.window_len, e.universe_size);
    const Eigen::VectorXd mkt = data.market.window(date, e.window_len);
    for (auto kind : config.models) {
      const RiskModel model = estimate_risk_model(kind, snap, mkt, e.risk);
      const std::string stem = period.name + "_" + std::string(model_slug(kind));
      if (config.debug.dump_covariance) {
        write_file(dir / ("covariance_" + stem + "_" + date.str() + ".csv"),
                   render([&](std::ostream& s) { write_covariance_csv(s, model, e.risk.dense_cap); }), written);
      }
      if (!config.debug.dump_solver_trace) continue;
      StrategyConfig traced = e.strategy;
      traced.solver.record_trace = true;
      for (auto s : config.strategies) {
        if (s != StrategyKind::MinimumVariance && s != StrategyKind::MaximumDiversification) continue;
        QpSolution sol;
        try {
          if (s == StrategyKind::MinimumVariance) min_variance(model, traced, &sol);
          else max_diversification(model, implied_volatilities(model), traced, &sol);
        } catch (const SolverError&) {
          // the trace up to the failure is still worth writing
        }
        write_file(dir / ("solver_trace_" + stem + "_" + std::string(strategy_slug(s)) + ".csv"),
                   render([&](std::ostream& o) { write_trace_csv(o, sol.trace); }), written);
      }
    }
  }
}

json versions() {
  json v;
  v["portrisk"] = PORTRISK_VERSION;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["boost"] = BOOST_LIB_VERSION;
  v["openssl"] = OPENSSL_VERSION_TEXT;
  v["compiler"] = __VERSION__;
  return v;
}

}  // namespace

int run_from_config(const RunConfig& config, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedData data;
  try {
    data = load_data(config);
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }

  EngineConfig engine = config.engine;
  engine.workers = config.workers ? config.workers : std::max(1u, std::thread::hardware_concurrency());

  MatrixResult matrix;
  try {
    matrix = run_matrix(data.panel, data.market, config.periods, config.models, config.strategies, engine);
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << "\n";
    return kExitSolver;
  }
  const auto t_solved = std::chrono::steady_clock::now();

  std::vector<std::string> notes;
  // benchmark columns ignore the risk model, so they must agree across tables
  std::map<std::pair<std::string, StrategyKind>, std::vector<double>> benchmark_returns;
  for (const auto& r : matrix.results) {
    if (!is_benchmark(r.strategy)) continue;
    auto [it, inserted] = benchmark_returns.try_emplace({r.period.name, r.strategy}, r.monthly_returns);
    if (!inserted && it->second != r.monthly_returns) {
      matrix.errors.push_back(r.period.name + "/" + std::string(strategy_slug(r.strategy)) +
                              ": benchmark returns differ between models");
    }
  }

  std::vector<MetricsRow> metrics;
  metrics.reserve(matrix.results.size());
  for (const auto& r : matrix.results) {
    try {
      metrics.push_back(compute_metrics(r, data.market));
    } catch (const SharpeUndefinedError& e) {
      MetricsRow row = MetricsRow::nan();
      notes.push_back(r.period.name + "/" + std::string(model_slug(r.model)) + "/" +
                      std::string(strategy_slug(r.strategy)) + ": " + e.what());
      metrics.push_back(row);
    } catch (const DataError& e) {
      notes.push_back(r.period.name + "/" + std::string(model_slug(r.model)) + "/" +
                      std::string(strategy_slug(r.strategy)) + ": " + e.what());
      metrics.push_back(MetricsRow::nan());
    }
  }

  const fs::path dir = config.output_dir;
  std::vector<std::string> written;
  json unsupported = json::array();
  try {
    fs::create_directories(dir);
    const std::size_t ns = config.strategies.size();
    std::vector<SurfaceRow> surface;
    for (std::size_t p = 0, k = 0; p < config.periods.size(); ++p) {
      for (std::size_t m = 0; m < config.models.size(); ++m, k += ns) {
        const PeriodSpec& period = config.periods[p];
        const ModelKind model = config.models[m];
        std::vector<TableColumn> columns;
        std::vector<const BacktestResult*> results;
        for (std::size_t s = 0; s < ns; ++s) {
          const BacktestResult& r = matrix.results[k + s];
          columns.push_back({r.strategy, metrics[k + s]});
          results.push_back(&r);
          surface.push_back({period.name, model, r.strategy, metrics[k + s]});
          if (r.failed) {
            unsupported.push_back({{"period", period.name},
                                   {"model", model_slug(model)},
                                   {"strategy", strategy_slug(r.strategy)},
                                   {"reason", r.failure_reason}});
          }
          if (config.debug.dump_weights && !r.failed) {
            write_file(dir / ("weights_" + period.name + "_" + std::string(model_slug(model)) + "_" +
                              std::string(strategy_slug(r.strategy)) + ".csv"),
                       render([&](std::ostream& o) { write_weights_csv(o, r); }), written);
          }
        }
        write_file(dir / metrics_file_name(period, model),
                   render([&](std::ostream& o) { write_metrics_csv(o, columns); }), written);
        write_file(dir / cumret_file_name(period, model),
                   render([&](std::ostream& o) { write_cumret_csv(o, results); }), written);
        write_file(dir / chart_file_name(period, model),
                   render([&](std::ostream& o) { write_chart_svg(o, chart_title(period, model), results); }),
                   written);
      }
    }
    write_file(dir / "surface.csv", render([&](std::ostream& o) { write_surface_csv(o, surface); }), written);
    write_file(dir / "config_echo.ini", canonical_ini(config), written);
    if (config.debug.dump_covariance || config.debug.dump_solver_trace) {
      write_debug_dumps(config, data, dir, written);
    }

    json manifest;
    manifest["tool"] = "portrisk";
    manifest["versions"] = versions();
    manifest["config"] = canonical_ini(config);
    manifest["data"] = data.description;
    manifest["conventions"] = {
        {"periods", "half-open [start, end); a boundary month belongs to the later period"},
        {"rebalance", "monthly, full, no transaction costs"},
        {"tables", "arithmetic monthly means x12; sample std (m-1) x sqrt(12); beta = OLS slope on market"},
        {"charts", "cumulative compounded excess return prod(1 + r) - 1"},
        {"positions", "weights above 1e-6"},
        {"effective_n", "1 / sum w^2, averaged over rebalances"},
        {"nan", "unsupported model/strategy combinations are reported as NaN"},
    };
    manifest["summary"] = {
        {"combinations", matrix.results.size()},
        {"unsupported", unsupported},
        {"errors", matrix.errors},
        {"diagnostics", matrix.diagnostics},
        {"notes", notes},
    };
    std::sort(written.begin(), written.end());
    manifest["outputs"] = written;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n", written);

    // wall-clock facts vary run to run, so they live outside the manifest
    const auto t1 = std::chrono::steady_clock::now();
    json timing;
    timing["workers"] = engine.workers;
    timing["backtest_seconds"] = std::chrono::duration<double>(t_solved - t0).count();
    timing["total_seconds"] = std::chrono::duration<double>(t1 - t0).count();
    write_file(dir / "timing.json", timing.dump(2) + "\n", written);
  } catch (const std::exception& e) {
    err << "output error: " << e.what() << "\n";
    return kExitUsage;
  }

  out << "wrote " << written.size() << " files to " << dir.string() << "\n";
  out << matrix.results.size() << " combinations, " << unsupported.size() << " unsupported (NaN), "
      << matrix.errors.size() << " errors, " << matrix.diagnostics.size() << " diagnostics\n";
  for (const auto& u : unsupported) {
    out << "  NaN: " << u["period"].get<std::string>() << "/" << u["model"].get<std::string>() << "/"
        << u["strategy"].get<std::string>() << " (" << u["reason"].get<std::string>() << ")\n";
  }
  for (const auto& n : notes) out << "  note: " << n << "\n";
  for (const auto& d : matrix.diagnostics) out << "  diagnostic: " << d << "\n";
  if (!matrix.errors.empty()) {
    err << "solver failures:\n";
    for (const auto& e : matrix.errors) err << "  " << e << "\n";
    return kExitSolver;
  }
  return kExitOk;
}

int cmd_run(const fs::path& config_path, const std::optional<fs::path>& output_dir, std::optional<unsigned> workers,
            std::ostream& out, std::ostream& err) {
  RunConfig config;
  try {
    config = load_run_config(config_path);
  } catch (const ConfigError& e) {
    err << "invalid configuration " << config_path.string() << ":\n";
    for (const auto& p : e.problems()) err << "  " << p << "\n";
    return kExitConfig;
  }
  if (output_dir) config.output_dir = fs::absolute(*output_dir).lexically_normal();
  if (workers) config.workers = *workers;
  return run_from_config(config, out, err);
}

int cmd_synth(const SyntheticSpec& spec, const fs::path& dir, std::ostream& out, std::ostream& err) {
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    err << "invalid synthetic spec: " << e.what() << "\n";
    return kExitConfig;
  }
  const SyntheticData data = generate_synthetic_panel(spec);
  std::vector<std::string> written;
  try {
    fs::create_directories(dir);
    write_file(dir / "returns.csv", render([&](std::ostream& o) { write_returns_panel(o, data.panel); }), written);
    write_file(dir / "market.csv", render([&](std::ostream& o) { write_market_series(o, data.market); }), written);
    write_file(dir / "ground_truth.csv", render([&](std::ostream& o) { write_ground_truth(o, data.truth); }),
               written);
  } catch (const std::exception& e) {
    err << "output error: " << e.what() << "\n";
    return kExitUsage;
  }
  out << "wrote " << data.panel.size() << " observations of " << spec.n_assets << " assets over "
      << spec.n_months << " months to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_validate(const fs::path& returns, const fs::path& market, const std::optional<fs::path>& config_path,
                 std::ostream& out, std::ostream& err) {
  std::vector<PeriodSpec> periods = default_periods();
  int window_len = EngineConfig{}.window_len;
  std::size_t universe = EngineConfig{}.universe_size;
  if (config_path) {
    try {
      const RunConfig config = load_run_config(*config_path);
      periods = config.periods;
      window_len = config.engine.window_len;
      universe = config.engine.universe_size;
    } catch (const ConfigError& e) {
      err << "invalid configuration " << config_path->string() << ":\n";
      for (const auto& p : e.problems()) err << "  " << p << "\n";
      return kExitConfig;
    }
  }

  ReturnsPanel panel;
  MarketSeries series;
  try {
    panel = load_returns_panel(returns);
  } catch (const DataError& e) {
    err << returns.string() << ": " << e.what() << "\n";
    return kExitData;
  }
  try {
    series = load_market_series(market);
  } catch (const DataError& e) {
    err << market.string() << ": " << e.what() << "\n";
    return kExitData;
  }

  out << "returns: " << returns.string() << "\n"
      << "  observations " << panel.size() << ", assets " << panel.asset_ids().size() << "\n"
      << "  dates " << panel.first_date().str() << " to " << panel.last_date().str() << " (" << panel.num_dates()
      << " months)\n";
  out << "market: " << market.string() << "\n"
      << "  dates " << series.first_date().str() << " to " << series.last_date().str() << " (" << series.size()
      << " months)\n";
  out << "assets per month:\n";
  for (YearMonth t = panel.first_date(); t <= panel.last_date(); ++t) {
    out << "  " << t.str() << " " << panel.count_at(t) << "\n";
  }

  std::vector<std::string> warnings;
  out << "periods (window " << window_len << ", universe " << universe << "):\n";
  for (const auto& p : periods) {
    const YearMonth warmup = p.start - window_len;
    out << "  " << p.name << " " << p.start.str() << " to " << p.end.str() << " (exclusive)";
    if (warmup < panel.first_date()) {
      warnings.push_back("period " + p.name + ": warmup needs returns from " + warmup.str() +
                         " but the panel starts at " + panel.first_date().str());
    }
    if (panel.last_date() < p.end - 1) {
      warnings.push_back("period " + p.name + ": needs returns through " + (p.end - 1).str() +
                         " but the panel ends at " + panel.last_date().str());
    }
    if (!series.covers(warmup, p.end - 1)) {
      warnings.push_back("period " + p.name + ": market series does not cover " + warmup.str() + " to " +
                         (p.end - 1).str());
    }
    std::size_t lo = std::numeric_limits<std::size_t>::max();
    YearMonth lo_date = p.start;
    for (YearMonth t = p.start; t < p.end; ++t) {
      const std::size_t c = count_eligible(panel, t, window_len);
      if (c < lo) {
        lo = c;
        lo_date = t;
      }
    }
    out << ": eligible at start " << count_eligible(panel, p.start, window_len) << ", minimum " << lo << " at "
        << lo_date.str() << "\n";
    if (lo < universe) {
      warnings.push_back("period " + p.name + ": only " + std::to_string(lo) + " eligible assets at " +
                         lo_date.str() + ", universe size is " + std::to_string(universe));
    }
  }
  for (const auto& w : warnings) out << "warning: " << w << "\n";
  if (warnings.empty()) out << "no coverage problems found\n";
  return kExitOk;
}

}  // namespace portrisk
