#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "portrisk/commands.hpp"

int main(int argc, char** argv) {
  using namespace portrisk;
  CLI::App app{"portrisk - risk-model portfolio construction and rolling backtests"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> output_dir;
  std::optional<unsigned> workers;
  auto* run = app.add_subcommand("run", "run the backtest matrix described by a config file");
  run->add_option("--config,-c", config_path, "INI configuration file")->required();
  run->add_option("--output,-o", output_dir, "output directory (overrides the config and $PORTRISK_OUTPUT_DIR)");
  run->add_option("--workers,-j", workers, "rebalance dates solved in parallel (0 = one per core)");

  SyntheticSpec spec;
  std::string synth_dir = ".";
  double beta_low = spec.beta_range.first, beta_high = spec.beta_range.second;
  double idio_low = spec.idio_vol_range.first, idio_high = spec.idio_vol_range.second;
  std::string start = spec.start.str();
  auto* synth = app.add_subcommand("synth", "write a synthetic single-factor panel");
  synth->add_option("--assets", spec.n_assets, "number of assets")->capture_default_str();
  synth->add_option("--months", spec.n_months, "number of months")->capture_default_str();
  synth->add_option("--seed", spec.seed, "random seed")->capture_default_str();
  synth->add_option("--start", start, "first month (YYYY-MM)")->capture_default_str();
  synth->add_option("--sigma-f", spec.sigma_f, "monthly market volatility")->capture_default_str();
  synth->add_option("--beta-low", beta_low, "lowest beta")->capture_default_str();
  synth->add_option("--beta-high", beta_high, "highest beta")->capture_default_str();
  synth->add_option("--idio-low", idio_low, "lowest idiosyncratic volatility")->capture_default_str();
  synth->add_option("--idio-high", idio_high, "highest idiosyncratic volatility")->capture_default_str();
  synth->add_option("--cap-log-mean", spec.cap_log_mean, "mean of log market cap")->capture_default_str();
  synth->add_option("--cap-log-sd", spec.cap_log_sd, "std dev of log market cap")->capture_default_str();
  synth->add_option("--out,-o", synth_dir, "output directory")->capture_default_str();

  std::string returns_path, market_path;
  std::optional<std::string> validate_config;
  auto* validate = app.add_subcommand("validate", "report data coverage without running a backtest");
  validate->add_option("returns", returns_path, "returns panel CSV")->required();
  validate->add_option("market", market_path, "market series CSV")->required();
  validate->add_option("--config,-c", validate_config, "config supplying periods, window and universe size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) {
      std::optional<std::filesystem::path> out;
      if (output_dir) out = *output_dir;
      return cmd_run(config_path, out, workers, std::cout, std::cerr);
    }
    if (*synth) {
      spec.beta_range = {beta_low, beta_high};
      spec.idio_vol_range = {idio_low, idio_high};
      try {
        spec.start = YearMonth::parse(start);
      } catch (const std::invalid_argument& e) {
        std::cerr << "invalid --start: " << e.what() << "\n";
        return kExitConfig;
      }
      return cmd_synth(spec, synth_dir, std::cout, std::cerr);
    }
    if (*validate) {
      std::optional<std::filesystem::path> cfg;
      if (validate_config) cfg = *validate_config;
      return cmd_validate(returns_path, market_path, cfg, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
