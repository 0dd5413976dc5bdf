#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "portrisk/backtest.hpp"
#include "portrisk/risk_models.hpp"
#include "portrisk/strategies.hpp"
#include "portrisk/synthetic.hpp"

namespace portrisk {

struct DebugOptions {
  bool dump_covariance = false;    // covariance_<period>_<model>_<date>.csv at each period's first date
  bool dump_weights = false;       // weights_<period>_<model>_<strategy>.csv
  bool dump_solver_trace = false;  // solver_trace_<period>_<model>_<strategy>.csv at each period's first date

  bool operator==(const DebugOptions&) const = default;
};

/// Everything a run needs. Paths are absolute once parsed.
struct RunConfig {
  bool synthetic = true;
  std::filesystem::path returns_path;
  std::filesystem::path market_path;
  SyntheticSpec synthetic_spec;

  std::vector<PeriodSpec> periods = default_periods();
  std::vector<ModelKind> models{std::begin(kAllModels), std::end(kAllModels)};
  std::vector<StrategyKind> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
  EngineConfig engine;

  /// Execution-only settings: they do not change any result and are left
  /// out of the canonical echo.
  std::filesystem::path output_dir;
  unsigned workers = 0;  // 0 = one per hardware thread

  DebugOptions debug;
};

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "PORTRISK_OUTPUT_DIR";

/// Parses INI text. Relative data paths resolve against `base_dir`.
/// Throws ConfigError listing every problem found.
RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Deterministic INI rendering of every result-affecting setting. Parsing it
/// back yields a config that reproduces the same run.
std::string canonical_ini(const RunConfig& config);

/// Equality over result-affecting settings (ignores output_dir and workers).
bool same_run(const RunConfig& a, const RunConfig& b);

}  // namespace portrisk
