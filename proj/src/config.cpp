#include "portrisk/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <type_traits>

#include "portrisk/errors.hpp"

namespace portrisk {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"data", {"source", "returns", "market"}},
      {"synthetic",
       {"assets", "months", "start", "sigma_f", "beta_low", "beta_high", "idio_vol_low", "idio_vol_high",
        "cap_log_mean", "cap_log_sd", "seed"}},
      {"periods", {}},  // free-form: name = start, end[, label]
      {"universe", {"window_len", "size"}},
      {"riskmodel", {"models", "shrinkage_delta", "psd_repair", "dense_cap"}},
      {"strategy", {"strategies", "weight_cap", "rp_upper"}},
      {"solver", {"tolerance", "max_iterations"}},
      {"run", {"output_dir", "workers"}},
      {"debug", {"covariance", "weights", "solver_trace"}},
  };
  return keys;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::string join_slugs(const std::vector<T>& kinds, std::string_view (*slug)(T)) {
  std::string out;
  for (auto k : kinds) {
    if (!out.empty()) out += ", ";
    out += slug(k);
  }
  return out;
}

// Reads typed values, recording a problem instead of throwing.
class Reader {
 public:
  Reader(const pt::ptree& tree, std::vector<std::string>& problems) : tree_(tree), problems_(problems) {}

  std::optional<std::string> text(const std::string& section, const std::string& key) const {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  void real(const std::string& section, const std::string& key, double& out) const {
    const auto v = text(section, key);
    if (!v) return;
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
    if (ec != std::errc() || ptr != v->data() + v->size() || !std::isfinite(x)) {
      problems_.push_back(section + "." + key + ": '" + *v + "' is not a number");
      return;
    }
    out = x;
  }

  template <class Int>
  void integer(const std::string& section, const std::string& key, Int& out) const {
    const auto v = text(section, key);
    if (!v) return;
    long long x = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
      problems_.push_back(section + "." + key + ": '" + *v + "' is not an integer");
      return;
    }
    if (std::is_unsigned_v<Int> && x < 0) {
      problems_.push_back(section + "." + key + ": must not be negative (got " + *v + ")");
      return;
    }
    out = static_cast<Int>(x);
  }

  void boolean(const std::string& section, const std::string& key, bool& out) const {
    const auto v = text(section, key);
    if (!v) return;
    std::string lower = *v;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "true" || lower == "yes" || lower == "1" || lower == "on") out = true;
    else if (lower == "false" || lower == "no" || lower == "0" || lower == "off") out = false;
    else problems_.push_back(section + "." + key + ": '" + *v + "' is not a boolean");
  }

  void month(const std::string& section, const std::string& key, YearMonth& out) const {
    const auto v = text(section, key);
    if (!v) return;
    try {
      out = YearMonth::parse(*v);
    } catch (const std::invalid_argument&) {
      problems_.push_back(section + "." + key + ": '" + *v + "' is not a YYYY-MM month");
    }
  }

 private:
  const pt::ptree& tree_;
  std::vector<std::string>& problems_;
};

bool safe_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative()) path = base / path;
  return std::filesystem::absolute(path).lexically_normal();
}

void validate(const RunConfig& c, std::vector<std::string>& problems) {
  if (c.synthetic) {
    try {
      c.synthetic_spec.validate();
    } catch (const std::invalid_argument& e) {
      problems.push_back(std::string("synthetic: ") + e.what());
    }
  } else {
    if (c.returns_path.empty()) problems.push_back("data.returns: required when data.source = files");
    else if (!std::filesystem::exists(c.returns_path)) problems.push_back("data.returns: no such file " + c.returns_path.string());
    if (c.market_path.empty()) problems.push_back("data.market: required when data.source = files");
    else if (!std::filesystem::exists(c.market_path)) problems.push_back("data.market: no such file " + c.market_path.string());
  }

  if (c.periods.empty()) problems.push_back("periods: at least one period is required");
  std::set<std::string> names;
  for (const auto& p : c.periods) {
    if (!names.insert(p.name).second) problems.push_back("periods." + p.name + ": duplicate period name");
    if (!(p.start < p.end)) problems.push_back("periods." + p.name + ": start must be before end");
  }

  const auto& e = c.engine;
  const bool estimates = std::any_of(c.strategies.begin(), c.strategies.end(),
                                     [](StrategyKind s) { return !is_benchmark(s); });
  const bool regression_models = std::any_of(c.models.begin(), c.models.end(), [](ModelKind m) {
    return m == ModelKind::SingleFactor || m == ModelKind::ConstantCorrelation;
  });
  const int min_window = estimates && regression_models ? 24 : 2;
  if (e.window_len < min_window) {
    problems.push_back("universe.window_len: must be at least " + std::to_string(min_window) + " (got " +
                       std::to_string(e.window_len) + ")");
  }
  if (e.universe_size < 2) problems.push_back("universe.size: must be at least 2");

  if (c.models.empty()) problems.push_back("riskmodel.models: at least one model is required");
  if (c.strategies.empty()) problems.push_back("strategy.strategies: at least one strategy is required");
  if (e.risk.shrinkage_delta && !(*e.risk.shrinkage_delta >= 0.0 && *e.risk.shrinkage_delta <= 1.0)) {
    problems.push_back("riskmodel.shrinkage_delta: must lie in [0, 1]");
  }
  const bool shrunk = std::find(c.models.begin(), c.models.end(), ModelKind::ShrunkSample) != c.models.end();
  if ((shrunk || c.debug.dump_covariance) && e.universe_size > e.risk.dense_cap) {
    problems.push_back("riskmodel.dense_cap: " + std::to_string(e.risk.dense_cap) + " is below universe.size " +
                       std::to_string(e.universe_size) + " (needed for the dense shrunk sample model)");
  }

  const double cap = e.strategy.weight_cap;
  if (!(cap > 0.0 && cap <= 1.0)) {
    problems.push_back("strategy.weight_cap: must lie in (0, 1]");
  } else if (cap * static_cast<double>(e.universe_size) < 1.0 - 1e-12) {
    problems.push_back("strategy.weight_cap: " + format_double(cap) + " x universe.size " +
                       std::to_string(e.universe_size) + " < 1, capped programs infeasible");
  }
  if (!(e.strategy.rp_upper > 0.0)) problems.push_back("strategy.rp_upper: must be positive");
  if (!(e.strategy.solver.tolerance > 0.0)) problems.push_back("solver.tolerance: must be positive");
  if (e.strategy.solver.max_iterations < 1) problems.push_back("solver.max_iterations: must be at least 1");
}

}  // namespace

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError({"line " + std::to_string(e.line()) + ": " + e.message()});
  }

  std::vector<std::string> problems;
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) {
      problems.push_back("unknown section [" + section + "]");
      continue;
    }
    if (section == "periods") continue;
    for (const auto& kv : body) {
      if (!it->second.count(kv.first)) problems.push_back(section + "." + kv.first + ": unknown key");
    }
  }

  Reader r(tree, problems);
  RunConfig c;

  const std::string source = r.text("data", "source").value_or("synthetic");
  if (source == "synthetic") {
    c.synthetic = true;
  } else if (source == "files") {
    c.synthetic = false;
  } else {
    problems.push_back("data.source: '" + source + "' is neither 'synthetic' nor 'files'");
  }
  if (auto v = r.text("data", "returns")) c.returns_path = resolve(base_dir, *v);
  if (auto v = r.text("data", "market")) c.market_path = resolve(base_dir, *v);

  auto& s = c.synthetic_spec;
  r.integer("synthetic", "assets", s.n_assets);
  r.integer("synthetic", "months", s.n_months);
  r.month("synthetic", "start", s.start);
  r.real("synthetic", "sigma_f", s.sigma_f);
  r.real("synthetic", "beta_low", s.beta_range.first);
  r.real("synthetic", "beta_high", s.beta_range.second);
  r.real("synthetic", "idio_vol_low", s.idio_vol_range.first);
  r.real("synthetic", "idio_vol_high", s.idio_vol_range.second);
  r.real("synthetic", "cap_log_mean", s.cap_log_mean);
  r.real("synthetic", "cap_log_sd", s.cap_log_sd);
  r.integer("synthetic", "seed", s.seed);

  if (const auto sec = tree.get_child_optional("periods")) {
    c.periods.clear();
    for (const auto& [name, value] : *sec) {
      const auto parts = split_list(value.data());
      if (!safe_name(name)) {
        problems.push_back("periods." + name + ": name may only use letters, digits, '_' and '-'");
      }
      if (parts.size() < 2 || parts.size() > 3) {
        problems.push_back("periods." + name + ": expected 'start, end[, label]'");
        continue;
      }
      try {
        c.periods.push_back({name, parts.size() == 3 ? parts[2] : std::string(), YearMonth::parse(parts[0]),
                             YearMonth::parse(parts[1])});
      } catch (const std::invalid_argument&) {
        problems.push_back("periods." + name + ": dates must be YYYY-MM");
      }
    }
  }

  r.integer("universe", "window_len", c.engine.window_len);
  r.integer("universe", "size", c.engine.universe_size);

  if (auto v = r.text("riskmodel", "models")) {
    c.models.clear();
    for (const auto& item : split_list(*v)) {
      if (auto k = parse_model_kind(item)) {
        if (std::find(c.models.begin(), c.models.end(), *k) != c.models.end()) {
          problems.push_back("riskmodel.models: '" + item + "' listed twice");
        } else {
          c.models.push_back(*k);
        }
      } else {
        problems.push_back("riskmodel.models: unknown model '" + item + "'");
      }
    }
  }
  double delta = 1.0 / 3.0;
  r.real("riskmodel", "shrinkage_delta", delta);
  c.engine.risk.shrinkage_delta = delta;
  r.boolean("riskmodel", "psd_repair", c.engine.risk.psd_repair);
  r.integer("riskmodel", "dense_cap", c.engine.risk.dense_cap);

  if (auto v = r.text("strategy", "strategies")) {
    c.strategies.clear();
    for (const auto& item : split_list(*v)) {
      if (auto k = parse_strategy_kind(item)) {
        if (std::find(c.strategies.begin(), c.strategies.end(), *k) != c.strategies.end()) {
          problems.push_back("strategy.strategies: '" + item + "' listed twice");
        } else {
          c.strategies.push_back(*k);
        }
      } else {
        problems.push_back("strategy.strategies: unknown strategy '" + item + "'");
      }
    }
  }
  r.real("strategy", "weight_cap", c.engine.strategy.weight_cap);
  r.real("strategy", "rp_upper", c.engine.strategy.rp_upper);
  r.real("solver", "tolerance", c.engine.strategy.solver.tolerance);
  r.integer("solver", "max_iterations", c.engine.strategy.solver.max_iterations);

  if (auto v = r.text("run", "output_dir")) {
    c.output_dir = std::filesystem::absolute(*v).lexically_normal();
  } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    c.output_dir = std::filesystem::absolute(env).lexically_normal();
  } else {
    c.output_dir = std::filesystem::absolute("portrisk-output").lexically_normal();
  }
  r.integer("run", "workers", c.workers);

  r.boolean("debug", "covariance", c.debug.dump_covariance);
  r.boolean("debug", "weights", c.debug.dump_weights);
  r.boolean("debug", "solver_trace", c.debug.dump_solver_trace);

  validate(c, problems);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path.string()});
  return parse_run_config(in, std::filesystem::absolute(path).parent_path());
}

std::string canonical_ini(const RunConfig& c) {
  std::ostringstream out;
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "[data]\n";
  if (c.synthetic) {
    out << "source = synthetic\n";
  } else {
    out << "source = files\n"
        << "returns = " << c.returns_path.string() << "\n"
        << "market = " << c.market_path.string() << "\n";
  }
  if (c.synthetic) {
    const auto& s = c.synthetic_spec;
    out << "\n[synthetic]\n"
        << "assets = " << s.n_assets << "\n"
        << "months = " << s.n_months << "\n"
        << "start = " << s.start.str() << "\n"
        << "sigma_f = " << format_double(s.sigma_f) << "\n"
        << "beta_low = " << format_double(s.beta_range.first) << "\n"
        << "beta_high = " << format_double(s.beta_range.second) << "\n"
        << "idio_vol_low = " << format_double(s.idio_vol_range.first) << "\n"
        << "idio_vol_high = " << format_double(s.idio_vol_range.second) << "\n"
        << "cap_log_mean = " << format_double(s.cap_log_mean) << "\n"
        << "cap_log_sd = " << format_double(s.cap_log_sd) << "\n"
        << "seed = " << s.seed << "\n";
  }
  out << "\n[periods]\n";
  for (const auto& p : c.periods) {
    out << p.name << " = " << p.start.str() << ", " << p.end.str();
    if (!p.label.empty()) out << ", " << p.label;
    out << "\n";
  }
  const auto& e = c.engine;
  out << "\n[universe]\n"
      << "window_len = " << e.window_len << "\n"
      << "size = " << e.universe_size << "\n";
  out << "\n[riskmodel]\n"
      << "models = " << join_slugs(c.models, &model_slug) << "\n"
      << "shrinkage_delta = " << format_double(e.risk.shrinkage_delta.value_or(1.0 / 3.0)) << "\n"
      << "psd_repair = " << b(e.risk.psd_repair) << "\n"
      << "dense_cap = " << e.risk.dense_cap << "\n";
  out << "\n[strategy]\n"
      << "strategies = " << join_slugs(c.strategies, &strategy_slug) << "\n"
      << "weight_cap = " << format_double(e.strategy.weight_cap) << "\n"
      << "rp_upper = " << format_double(e.strategy.rp_upper) << "\n";
  out << "\n[solver]\n"
      << "tolerance = " << format_double(e.strategy.solver.tolerance) << "\n"
      << "max_iterations = " << e.strategy.solver.max_iterations << "\n";
  out << "\n[debug]\n"
      << "covariance = " << b(c.debug.dump_covariance) << "\n"
      << "weights = " << b(c.debug.dump_weights) << "\n"
      << "solver_trace = " << b(c.debug.dump_solver_trace) << "\n";
  return out.str();
}

bool same_run(const RunConfig& a, const RunConfig& b) { return canonical_ini(a) == canonical_ini(b); }

}  // namespace portrisk
