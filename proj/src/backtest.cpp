#include "portrisk/backtest.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <optional>
#include <thread>

#include "portrisk/errors.hpp"

namespace portrisk {
namespace {

// Relative slack for the per-date dominance checks. Weights are cleaned after
// solving, so the optimum is only reproduced to about the drop threshold.
constexpr double kDominanceSlack = 1e-7;

enum class CellState { Ok, Unsupported, Error };

struct Cell {
  CellState state = CellState::Ok;
  Eigen::VectorXd w;
  double realized = 0.0;
  std::string message;
};

struct DateOutcome {
  std::shared_ptr<const std::vector<std::string>> ids;
  std::vector<Cell> cells;  // models x strategies, row-major
  std::vector<std::string> diagnostics;
};

struct WorkItem {
  std::size_t period;
  YearMonth date;
};

bool within_cap(const Eigen::VectorXd& w, double cap) { return w.maxCoeff() <= cap + 1e-12; }

std::string cell_tag(const PeriodSpec& period, ModelKind model, StrategyKind strategy, YearMonth date) {
  return period.name + "/" + std::string(model_slug(model)) + "/" + std::string(strategy_slug(strategy)) +
         " at " + date.str();
}

void check_dominance(const RiskModel& model, const StrategyConfig& cfg, const PeriodSpec& period,
                     YearMonth date, const std::vector<StrategyKind>& strategies,
                     const std::vector<Cell>& row, const Eigen::VectorXd& ew, const Eigen::VectorXd& vw,
                     std::vector<std::string>& out) {
  const Cell* mv = nullptr;
  const Cell* md = nullptr;
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    if (row[s].state != CellState::Ok) continue;
    if (strategies[s] == StrategyKind::MinimumVariance) mv = &row[s];
    if (strategies[s] == StrategyKind::MaximumDiversification) md = &row[s];
  }
  // comparators must be feasible for the capped programs
  std::vector<std::pair<const char*, const Eigen::VectorXd*>> rivals;
  if (within_cap(ew, cfg.weight_cap)) rivals.emplace_back("equal_weighted", &ew);
  if (within_cap(vw, cfg.weight_cap)) rivals.emplace_back("value_weighted", &vw);

  const std::string where = period.name + "/" + std::string(model_slug(model.kind())) + " at " + date.str();
  if (mv) {
    const double v_mv = portfolio_variance(model, mv->w);
    for (const auto& [name, w] : rivals) {
      const double v = portfolio_variance(model, *w);
      if (v_mv > v * (1.0 + kDominanceSlack)) {
        out.push_back(where + ": min_variance variance " + format_double(v_mv) + " exceeds " + name + " " +
                      format_double(v));
      }
    }
  }
  if (md) {
    const double dr_md = diversification_ratio(model, md->w);
    if (mv) rivals.emplace_back("min_variance", &mv->w);
    for (const auto& [name, w] : rivals) {
      const double dr = diversification_ratio(model, *w);
      if (dr_md < dr * (1.0 - kDominanceSlack)) {
        out.push_back(where + ": max_diversification ratio " + format_double(dr_md) + " below " + name + " " +
                      format_double(dr));
      }
    }
  }
}

DateOutcome solve_date(const ReturnsPanel& panel, const MarketSeries& market, const PeriodSpec& period,
                       YearMonth date, const std::vector<ModelKind>& models,
                       const std::vector<StrategyKind>& strategies, const EngineConfig& config) {
  const UniverseSnapshot snap = select_universe(panel, date, config.window_len, config.universe_size);
  const Eigen::VectorXd mkt = market.window(date, config.window_len);

  DateOutcome out;
  out.ids = std::make_shared<const std::vector<std::string>>(snap.asset_ids);
  out.cells.resize(models.size() * strategies.size());

  const Eigen::VectorXd ew = equal_weight(snap).w;
  const Eigen::VectorXd vw = value_weight(snap).w;

  for (std::size_t m = 0; m < models.size(); ++m) {
    std::optional<RiskModel> model;
    bool needs_model = false;
    for (auto s : strategies) needs_model = needs_model || !is_benchmark(s);
    if (needs_model) model = estimate_risk_model(models[m], snap, mkt, config.risk);

    for (std::size_t s = 0; s < strategies.size(); ++s) {
      Cell& cell = out.cells[m * strategies.size() + s];
      const StrategyKind kind = strategies[s];
      try {
        if (kind == StrategyKind::EqualWeighted) cell.w = ew;
        else if (kind == StrategyKind::ValueWeighted) cell.w = vw;
        else cell.w = build_portfolio(kind, snap, *model, config.strategy).w;
        cell.realized = realized_return(panel, snap, cell.w, date);
      } catch (const NotPositiveDefiniteError& e) {
        cell.state = CellState::Unsupported;
        cell.message = e.what();
        cell.w.resize(0);
      } catch (const SolverError& e) {
        cell.state = CellState::Error;
        cell.message = cell_tag(period, models[m], kind, date) + ": " + e.what();
        cell.w.resize(0);
      }
    }
    if (model) {
      std::vector<Cell> row(out.cells.begin() + static_cast<std::ptrdiff_t>(m * strategies.size()),
                            out.cells.begin() + static_cast<std::ptrdiff_t>((m + 1) * strategies.size()));
      check_dominance(*model, config.strategy, period, date, strategies, row, ew, vw, out.diagnostics);
    }
  }
  return out;
}

}  // namespace

std::vector<PeriodSpec> default_periods() {
  return {
      {"DotCom", "Dot Com Bubble", YearMonth(1990, 1), YearMonth(2000, 3)},
      {"GFC", "GFC", YearMonth(2000, 3), YearMonth(2008, 9)},
      {"Covid", "Covid-19", YearMonth(2008, 9), YearMonth(2020, 4)},
      {"PostCovid", "Post Covid", YearMonth(2020, 4), YearMonth(2023, 12)},
  };
}

std::size_t Rebalance::positions() const {
  return static_cast<std::size_t>((w.array() > kPositionThreshold).count());
}

double Rebalance::effective_n() const { return 1.0 / w.squaredNorm(); }

void check_coverage(const ReturnsPanel& panel, const MarketSeries& market, const PeriodSpec& period,
                    int window_len) {
  if (!(period.start < period.end)) {
    throw DataError("period " + period.name + ": start " + period.start.str() + " is not before end " +
                    period.end.str());
  }
  if (panel.empty()) throw DataError("returns panel is empty");
  if (market.empty()) throw DataError("market series is empty");
  const YearMonth warmup = period.start - window_len;
  const YearMonth last = period.end - 1;
  if (warmup < panel.first_date() || panel.last_date() < last) {
    throw DataError("period " + period.name + " needs returns from " + warmup.str() + " to " + last.str() +
                    "; panel covers " + panel.first_date().str() + " to " + panel.last_date().str());
  }
  if (!market.covers(warmup, last)) {
    throw DataError("period " + period.name + " needs market returns from " + warmup.str() + " to " +
                    last.str() + "; series covers " + market.first_date().str() + " to " +
                    market.last_date().str());
  }
}

double realized_return(const ReturnsPanel& panel, const UniverseSnapshot& snapshot,
                       const Eigen::VectorXd& w, YearMonth date) {
  double total = 0.0;
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    const double wi = w(static_cast<Eigen::Index>(i));
    if (wi == 0.0) continue;
    const double r = panel.return_at(date, snapshot.panel_index[i]);
    if (!std::isnan(r)) total += wi * r;
  }
  return total;
}

MatrixResult run_matrix(const ReturnsPanel& panel, const MarketSeries& market,
                        const std::vector<PeriodSpec>& periods, const std::vector<ModelKind>& models,
                        const std::vector<StrategyKind>& strategies, const EngineConfig& config) {
  for (const auto& p : periods) check_coverage(panel, market, p, config.window_len);

  std::vector<WorkItem> items;
  for (std::size_t p = 0; p < periods.size(); ++p) {
    for (YearMonth t = periods[p].start; t < periods[p].end; ++t) items.push_back({p, t});
  }

  std::vector<DateOutcome> outcomes(items.size());
  std::vector<std::exception_ptr> failures(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < items.size(); k = next++) {
      try {
        outcomes[k] = solve_date(panel, market, periods[items[k].period], items[k].date, models, strategies,
                                 config);
      } catch (...) {
        failures[k] = std::current_exception();
      }
    }
  };
  const unsigned n_threads =
      std::max(1u, std::min<unsigned>(config.workers, static_cast<unsigned>(items.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  // the earliest failing date wins, whatever the scheduling
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  MatrixResult result;
  std::size_t k = 0;
  for (std::size_t p = 0; p < periods.size(); ++p) {
    const std::size_t first = k;
    while (k < items.size() && items[k].period == p) ++k;
    for (std::size_t m = 0; m < models.size(); ++m) {
      for (std::size_t s = 0; s < strategies.size(); ++s) {
        BacktestResult r;
        r.period = periods[p];
        r.model = models[m];
        r.strategy = strategies[s];
        bool hard = false;
        for (std::size_t j = first; j < k; ++j) {
          Cell& cell = outcomes[j].cells[m * strategies.size() + s];
          if (cell.state == CellState::Unsupported) {
            if (!r.failed) r.failure_reason = cell.message;
            r.failed = true;
          } else if (cell.state == CellState::Error) {
            result.errors.push_back(cell.message);
            hard = true;
          }
          if (r.failed || hard) continue;
          r.dates.push_back(items[j].date);
          r.monthly_returns.push_back(cell.realized);
          r.weights_history.push_back({items[j].date, outcomes[j].ids, std::move(cell.w)});
        }
        if (r.failed || hard) {
          r.dates.clear();
          r.monthly_returns.clear();
          r.weights_history.clear();
          if (hard && !r.failed) {
            r.failed = true;
            r.failure_reason = "solver failure";
          }
        }
        result.results.push_back(std::move(r));
      }
    }
    for (std::size_t j = first; j < k; ++j) {
      for (auto& d : outcomes[j].diagnostics) result.diagnostics.push_back(std::move(d));
    }
  }
  return result;
}

BacktestResult run_backtest(const ReturnsPanel& panel, const MarketSeries& market, const PeriodSpec& period,
                            ModelKind model, StrategyKind strategy, const EngineConfig& config) {
  MatrixResult m = run_matrix(panel, market, {period}, {model}, {strategy}, config);
  if (!m.errors.empty()) throw SolverError(m.errors.front());
  return std::move(m.results.front());
}

}  // namespace portrisk
