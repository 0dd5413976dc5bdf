#include "portrisk/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "portrisk/errors.hpp"

namespace portrisk {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view text, std::size_t line, const char* field) {
  text = trim(text);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw DataError(std::string("invalid ") + field + " '" + std::string(text) + "'", line);
  }
  if (!std::isfinite(value)) {
    throw DataError(std::string("non-finite ") + field, line);
  }
  return value;
}

YearMonth parse_date(std::string_view text, std::size_t line) {
  try {
    return YearMonth::parse(trim(text));
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what(), line);
  }
}

// Reads the header line; returns false on an empty stream.
bool read_header(std::istream& in, std::string_view expected) {
  std::string header;
  if (!std::getline(in, header)) return false;
  if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
  if (trim(header) != expected) {
    throw DataError("expected header '" + std::string(expected) + "', got '" +
                        std::string(trim(header)) + "'",
                    1);
  }
  return true;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "NaN";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// ReturnsPanel

ReturnsPanel::ReturnsPanel(std::vector<Observation> rows) : rows_(std::move(rows)) {
  std::sort(rows_.begin(), rows_.end(), [](const Observation& a, const Observation& b) {
    if (a.date != b.date) return a.date < b.date;
    return a.asset_id < b.asset_id;
  });
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    if (!(r.market_cap > 0.0)) {
      throw DataError("non-positive market_cap for (" + r.date.str() + ", " + r.asset_id + ")");
    }
    if (!std::isfinite(r.excess_return) || !std::isfinite(r.market_cap)) {
      throw DataError("non-finite value for (" + r.date.str() + ", " + r.asset_id + ")");
    }
    if (i > 0 && rows_[i - 1].date == r.date && rows_[i - 1].asset_id == r.asset_id) {
      throw DataError("duplicate key (" + r.date.str() + ", " + r.asset_id + ")");
    }
  }
  if (rows_.empty()) return;

  for (const auto& r : rows_) assets_.push_back(r.asset_id);
  std::sort(assets_.begin(), assets_.end());
  assets_.erase(std::unique(assets_.begin(), assets_.end()), assets_.end());

  first_ = rows_.front().date;
  num_dates_ = rows_.back().date - first_ + 1;
  const auto n_assets = static_cast<Eigen::Index>(assets_.size());
  returns_ = Eigen::MatrixXd::Constant(num_dates_, n_assets, kNaN);
  caps_ = Eigen::MatrixXd::Constant(num_dates_, n_assets, kNaN);
  for (const auto& r : rows_) {
    auto a = std::lower_bound(assets_.begin(), assets_.end(), r.asset_id) - assets_.begin();
    returns_(r.date - first_, a) = r.excess_return;
    caps_(r.date - first_, a) = r.market_cap;
  }

  prefix_.assign(assets_.size(), std::vector<int>(num_dates_ + 1, 0));
  for (Eigen::Index a = 0; a < n_assets; ++a) {
    auto& pre = prefix_[a];
    int first_seen = -1;
    int last_seen = -1;
    for (int t = 0; t < num_dates_; ++t) {
      const bool present = !std::isnan(returns_(t, a));
      pre[t + 1] = pre[t] + (present ? 1 : 0);
      if (present) {
        if (first_seen < 0) first_seen = t;
        last_seen = t;
      }
    }
    const int span = last_seen - first_seen + 1;
    if (pre[num_dates_] != span) {
      for (int t = first_seen; t <= last_seen; ++t) {
        if (std::isnan(returns_(t, a))) {
          throw DataError("non-monthly gap for asset " + assets_[a] + ": missing " +
                          (first_ + t).str());
        }
      }
    }
  }
}

int ReturnsPanel::date_slot(YearMonth date) const {
  const int slot = date - first_;
  return (slot >= 0 && slot < num_dates_) ? slot : -1;
}

bool ReturnsPanel::has(YearMonth date, std::size_t asset) const {
  return !std::isnan(return_at(date, asset));
}

double ReturnsPanel::return_at(YearMonth date, std::size_t asset) const {
  const int slot = date_slot(date);
  if (slot < 0 || asset >= assets_.size()) return kNaN;
  return returns_(slot, static_cast<Eigen::Index>(asset));
}

double ReturnsPanel::cap_at(YearMonth date, std::size_t asset) const {
  const int slot = date_slot(date);
  if (slot < 0 || asset >= assets_.size()) return kNaN;
  return caps_(slot, static_cast<Eigen::Index>(asset));
}

bool ReturnsPanel::complete(std::size_t asset, YearMonth from, YearMonth to) const {
  if (to <= from) return true;
  const int lo = from - first_;
  const int hi = to - first_;
  if (lo < 0 || hi > num_dates_) return false;
  const auto& pre = prefix_[asset];
  return pre[hi] - pre[lo] == hi - lo;
}

std::size_t ReturnsPanel::count_at(YearMonth date) const {
  const int slot = date_slot(date);
  if (slot < 0) return 0;
  std::size_t count = 0;
  for (Eigen::Index a = 0; a < returns_.cols(); ++a) {
    if (!std::isnan(returns_(slot, a))) ++count;
  }
  return count;
}

// ---------------------------------------------------------------------------
// MarketSeries

MarketSeries::MarketSeries(std::vector<std::pair<YearMonth, double>> rows) : rows_(std::move(rows)) {
  std::sort(rows_.begin(), rows_.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < rows_.size(); ++i) {
    if (rows_[i].first == rows_[i - 1].first) {
      throw DataError("duplicate market date " + rows_[i].first.str());
    }
    if (rows_[i].first - rows_[i - 1].first != 1) {
      throw DataError("gap in market series at " + (rows_[i - 1].first + 1).str());
    }
  }
  for (const auto& [date, value] : rows_) {
    if (!std::isfinite(value)) throw DataError("non-finite market return at " + date.str());
  }
}

bool MarketSeries::covers(YearMonth from, YearMonth to_inclusive) const {
  if (rows_.empty()) return false;
  return first_date() <= from && to_inclusive <= last_date();
}

double MarketSeries::at(YearMonth date) const {
  if (rows_.empty() || date < first_date() || date > last_date()) {
    throw DataError("market series does not cover " + date.str());
  }
  return rows_[static_cast<std::size_t>(date - first_date())].second;
}

Eigen::VectorXd MarketSeries::window(YearMonth end, int len) const {
  if (!covers(end - len, end - 1)) {
    throw DataError("market series does not cover " + (end - len).str() + ".." + (end - 1).str());
  }
  Eigen::VectorXd out(len);
  const auto base = static_cast<std::size_t>((end - len) - first_date());
  for (int j = 0; j < len; ++j) out(j) = rows_[base + j].second;
  return out;
}

// ---------------------------------------------------------------------------
// CSV IO

ReturnsPanel parse_returns_panel(std::istream& in) {
  if (!read_header(in, "date,asset_id,excess_return,market_cap")) {
    throw DataError("empty input: missing header");
  }
  std::vector<Observation> rows;
  std::map<std::pair<int, std::string>, std::size_t> seen;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 4) {
      throw DataError("expected 4 fields, got " + std::to_string(fields.size()), line_no);
    }
    Observation obs;
    obs.date = parse_date(fields[0], line_no);
    obs.asset_id = std::string(trim(fields[1]));
    if (obs.asset_id.empty()) throw DataError("empty asset_id", line_no);
    obs.excess_return = parse_number(fields[2], line_no, "excess_return");
    obs.market_cap = parse_number(fields[3], line_no, "market_cap");
    if (!(obs.market_cap > 0.0)) {
      throw DataError("non-positive market_cap for (" + obs.date.str() + ", " + obs.asset_id + ")",
                      line_no);
    }
    auto [it, inserted] = seen.emplace(std::make_pair(obs.date.index(), obs.asset_id), line_no);
    if (!inserted) {
      throw DataError("duplicate key (" + obs.date.str() + ", " + obs.asset_id +
                          ") first seen on line " + std::to_string(it->second),
                      line_no);
    }
    rows.push_back(std::move(obs));
  }
  if (rows.empty()) throw DataError("empty input: no observations");
  return ReturnsPanel(std::move(rows));
}

ReturnsPanel load_returns_panel(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_returns_panel(in);
}

MarketSeries parse_market_series(std::istream& in) {
  if (!read_header(in, "date,market_excess_return")) {
    throw DataError("empty input: missing header");
  }
  std::vector<std::pair<YearMonth, double>> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 2) {
      throw DataError("expected 2 fields, got " + std::to_string(fields.size()), line_no);
    }
    rows.emplace_back(parse_date(fields[0], line_no),
                      parse_number(fields[1], line_no, "market_excess_return"));
  }
  if (rows.empty()) throw DataError("empty input: no market rows");
  return MarketSeries(std::move(rows));
}

MarketSeries load_market_series(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_market_series(in);
}

void write_returns_panel(std::ostream& out, const ReturnsPanel& panel) {
  out << "date,asset_id,excess_return,market_cap\n";
  for (const auto& r : panel.observations()) {
    out << r.date.str() << ',' << r.asset_id << ',' << format_double(r.excess_return) << ','
        << format_double(r.market_cap) << '\n';
  }
}

void write_market_series(std::ostream& out, const MarketSeries& market) {
  out << "date,market_excess_return\n";
  for (const auto& [date, value] : market.rows()) {
    out << date.str() << ',' << format_double(value) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Universe selection

namespace {

std::vector<std::size_t> eligible_assets(const ReturnsPanel& panel, YearMonth date, int window_len) {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < panel.asset_ids().size(); ++a) {
    if (panel.complete(a, date - window_len, date)) out.push_back(a);
  }
  return out;
}

}  // namespace

std::size_t count_eligible(const ReturnsPanel& panel, YearMonth date, int window_len) {
  return eligible_assets(panel, date, window_len).size();
}

UniverseSnapshot select_universe(const ReturnsPanel& panel, YearMonth date, int window_len,
                                 std::size_t n) {
  if (window_len < 1) throw std::invalid_argument("window_len must be positive");
  if (n < 2) throw std::invalid_argument("universe size must be at least 2");

  auto eligible = eligible_assets(panel, date, window_len);
  if (eligible.size() < n) throw InsufficientUniverseError(eligible.size(), n, date.str());

  const YearMonth cap_date = date - 1;
  const auto& ids = panel.asset_ids();
  auto by_cap = [&](std::size_t a, std::size_t b) {
    const double ca = panel.cap_at(cap_date, a);
    const double cb = panel.cap_at(cap_date, b);
    if (ca != cb) return ca > cb;
    return ids[a] < ids[b];
  };
  std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n),
                    eligible.end(), by_cap);
  eligible.resize(n);

  UniverseSnapshot snap;
  snap.date = date;
  snap.panel_index = eligible;
  snap.window.resize(static_cast<Eigen::Index>(n), window_len);
  snap.caps.resize(static_cast<Eigen::Index>(n));
  snap.asset_ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = eligible[i];
    snap.asset_ids.push_back(ids[a]);
    snap.caps(static_cast<Eigen::Index>(i)) = panel.cap_at(cap_date, a);
    for (int j = 0; j < window_len; ++j) {
      snap.window(static_cast<Eigen::Index>(i), j) = panel.return_at(date - window_len + j, a);
    }
  }
  return snap;
}

}  // namespace portrisk
