#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "portrisk/config.hpp"
#include "portrisk/synthetic.hpp"

namespace portrisk {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitSolver = 4,
};

/// Runs the full matrix described by `config` and writes every table,
/// chart and the manifest into config.output_dir.
int run_from_config(const RunConfig& config, std::ostream& out, std::ostream& err);

/// `run --config <path>`; `output_dir` overrides the configured directory.
int cmd_run(const std::filesystem::path& config_path, const std::optional<std::filesystem::path>& output_dir,
            std::optional<unsigned> workers, std::ostream& out, std::ostream& err);

/// `synth`: writes returns.csv, market.csv and ground_truth.csv into `dir`.
int cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& dir, std::ostream& out, std::ostream& err);

/// `validate`: coverage report for a pair of data files. Periods, window
/// and universe size come from `config_path` when given, else defaults.
int cmd_validate(const std::filesystem::path& returns, const std::filesystem::path& market,
                 const std::optional<std::filesystem::path>& config_path, std::ostream& out, std::ostream& err);

}  // namespace portrisk
