#include "portrisk/report.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "portrisk/errors.hpp"

namespace portrisk {
namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// Colour per strategy so that charts of different tables read alike.
const char* colour(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::ValueWeighted: return "#1f77b4";
    case StrategyKind::EqualWeighted: return "#ff7f0e";
    case StrategyKind::MinimumVariance: return "#2ca02c";
    case StrategyKind::MaximumDiversification: return "#d62728";
    case StrategyKind::RiskParity: return "#9467bd";
  }
  return "#000000";
}

std::string hex(const unsigned char* bytes, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out += digits[bytes[i] >> 4];
    out += digits[bytes[i] & 0xf];
  }
  return out;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const char* data, std::size_t len) { EVP_DigestUpdate(ctx_, data, len); }
  std::string finish() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    return hex(md, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

// "nice" tick step covering `span` with about `target` ticks
double tick_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

const std::vector<std::string> kMetricLabels = {"Average Excess Return", "Standard Deviation", "Sharpe Ratio",
                                                "Market Beta",           "Average Positions",  "Effective N"};

std::string metrics_file_name(const PeriodSpec& period, ModelKind model) {
  return "metrics_" + period.name + "_" + std::string(model_slug(model)) + ".csv";
}
std::string cumret_file_name(const PeriodSpec& period, ModelKind model) {
  return "cumret_" + period.name + "_" + std::string(model_slug(model)) + ".csv";
}
std::string chart_file_name(const PeriodSpec& period, ModelKind model) {
  return "chart_" + period.name + "_" + std::string(model_slug(model)) + ".svg";
}

std::string format_fixed(double value) {
  if (std::isnan(value)) return "NaN";
  std::string s = fmt("%.6f", value);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

void write_metrics_csv(std::ostream& out, const std::vector<TableColumn>& columns) {
  out << "metric";
  for (const auto& c : columns) out << "," << strategy_title(c.strategy);
  out << "\n";
  for (std::size_t r = 0; r < kMetricLabels.size(); ++r) {
    out << kMetricLabels[r];
    for (const auto& c : columns) {
      const MetricsRow& m = c.metrics;
      const double v = std::array{m.avg_excess_return, m.std_dev,         m.sharpe,
                                  m.market_beta,       m.avg_positions, m.effective_n}[r];
      out << "," << format_fixed(v);
    }
    out << "\n";
  }
}

std::vector<double> cumulative_returns(const std::vector<double>& monthly) {
  std::vector<double> out;
  out.reserve(monthly.size());
  double growth = 1.0;
  for (double r : monthly) {
    growth *= 1.0 + r;
    out.push_back(growth - 1.0);
  }
  return out;
}

void write_cumret_csv(std::ostream& out, const std::vector<const BacktestResult*>& results) {
  if (results.empty()) return;
  const PeriodSpec& period = results.front()->period;
  out << "date";
  for (const auto* r : results) out << "," << strategy_slug(r->strategy);
  out << "\n";
  std::vector<std::vector<double>> cum;
  for (const auto* r : results) {
    if (!(r->period == period)) throw std::invalid_argument("write_cumret_csv: results span several periods");
    cum.push_back(cumulative_returns(r->monthly_returns));
  }
  std::size_t k = 0;
  for (YearMonth t = period.start; t < period.end; ++t, ++k) {
    out << t.str();
    for (std::size_t j = 0; j < results.size(); ++j) {
      const auto* r = results[j];
      const bool have = !r->failed && k < r->dates.size() && r->dates[k] == t;
      out << "," << (have ? format_fixed(cum[j][k]) : std::string("NaN"));
    }
    out << "\n";
  }
}

std::string chart_title(const PeriodSpec& period, ModelKind model) {
  return std::string(model_title(model)) + " – Portfolios Comparison – " + period.title();
}

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_chart_svg(std::ostream& out, const std::string& title,
                     const std::vector<const BacktestResult*>& results) {
  constexpr double width = 960, height = 540;
  constexpr double left = 80, right = 230, top = 50, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  std::vector<const BacktestResult*> plotted;
  for (const auto* r : results) {
    if (!r->failed && !r->monthly_returns.empty()) plotted.push_back(r);
  }
  // x runs over month offsets from the period start; the curve starts at 0
  // one month before the first realized return
  YearMonth first, last;
  double lo = 0.0, hi = 0.0;
  if (!results.empty()) {
    first = results.front()->period.start;
    last = results.front()->period.end;
  }
  std::vector<std::vector<double>> cum;
  for (const auto* r : plotted) {
    cum.push_back(cumulative_returns(r->monthly_returns));
    for (double v : cum.back()) {
      lo = std::min(lo, 100.0 * v);
      hi = std::max(hi, 100.0 * v);
    }
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double step = tick_step(hi - lo, 6);
  lo = std::floor(lo / step) * step;
  hi = std::ceil(hi / step) * step;
  const double months = std::max(1, last - first);
  auto px = [&](double offset) { return left + plot_w * offset / months; };
  auto py = [&](double pct) { return top + plot_h * (hi - pct) / (hi - lo); };

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\" font-family=\"sans-serif\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
      << "<text x=\"" << fmt("%.1f", left + plot_w / 2) << "\" y=\"28\" font-size=\"17\" text-anchor=\"middle\">"
      << xml_escape(title) << "</text>\n";

  // grid and y ticks
  out << "<g font-size=\"11\" fill=\"#333\">\n";
  for (double v = lo; v <= hi + 1e-9 * step; v += step) {
    const std::string y = fmt("%.2f", py(v));
    out << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\"" << y
        << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n"
        << "<text x=\"" << left - 8 << "\" y=\"" << y << "\" text-anchor=\"end\" dominant-baseline=\"middle\">"
        << fmt("%.0f", v) << "%</text>\n";
  }
  // x ticks at January, thinned to at most ~12 labels
  const int years = std::max(1, (last - first) / 12);
  const int every = std::max(1, (years + 11) / 12);
  for (YearMonth t = first; t <= last; ++t) {
    if (t.month() != 1 || (t.year() % every) != 0) continue;
    const std::string x = fmt("%.2f", px(t - first));
    out << "<line x1=\"" << x << "\" y1=\"" << top + plot_h << "\" x2=\"" << x << "\" y2=\"" << top + plot_h + 5
        << "\" stroke=\"#333\"/>\n"
        << "<text x=\"" << x << "\" y=\"" << top + plot_h + 20 << "\" text-anchor=\"middle\">" << t.year()
        << "</text>\n";
  }
  out << "</g>\n";

  // axes
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << fmt("%.1f", left + plot_w / 2) << "\" y=\"" << height - 15
      << "\" font-size=\"13\" text-anchor=\"middle\">Date</text>\n"
      << "<text x=\"20\" y=\"" << fmt("%.1f", top + plot_h / 2) << "\" font-size=\"13\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 20 " << fmt("%.1f", top + plot_h / 2)
      << ")\">Cumulative excess return (%)</text>\n";

  // one polyline per strategy
  for (std::size_t j = 0; j < plotted.size(); ++j) {
    const auto* r = plotted[j];
    out << "<polyline fill=\"none\" stroke=\"" << colour(r->strategy) << "\" stroke-width=\"1.6\" "
        << "data-strategy=\"" << strategy_slug(r->strategy) << "\" points=\"";
    out << fmt("%.2f", px(r->dates.front() - first)) << "," << fmt("%.2f", py(0.0));
    for (std::size_t k = 0; k < r->dates.size(); ++k) {
      out << " " << fmt("%.2f", px(r->dates[k] - first + 1)) << "," << fmt("%.2f", py(100.0 * cum[j][k]));
    }
    out << "\"/>\n";
  }

  // legend
  const double lx = left + plot_w + 20;
  out << "<g font-size=\"12\">\n";
  for (std::size_t j = 0; j < plotted.size(); ++j) {
    const double ly = top + 10 + 22.0 * static_cast<double>(j);
    out << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 24 << "\" y2=\"" << ly << "\" stroke=\""
        << colour(plotted[j]->strategy) << "\" stroke-width=\"3\"/>\n"
        << "<text x=\"" << lx + 30 << "\" y=\"" << ly << "\" dominant-baseline=\"middle\">"
        << xml_escape(std::string(strategy_title(plotted[j]->strategy))) << "</text>\n";
  }
  out << "</g>\n</svg>\n";
}

void write_surface_csv(std::ostream& out, const std::vector<SurfaceRow>& rows) {
  out << "period,model,strategy,avg_excess_return,std_dev,sharpe\n";
  for (const auto& r : rows) {
    out << r.period << "," << model_slug(r.model) << "," << strategy_slug(r.strategy) << ","
        << format_fixed(r.metrics.avg_excess_return) << "," << format_fixed(r.metrics.std_dev) << ","
        << format_fixed(r.metrics.sharpe) << "\n";
  }
}

void write_weights_csv(std::ostream& out, const BacktestResult& result) {
  out << "date,asset_id,weight\n";
  for (const auto& reb : result.weights_history) {
    for (Eigen::Index i = 0; i < reb.w.size(); ++i) {
      if (reb.w(i) > kPositionThreshold) {
        out << reb.date.str() << "," << (*reb.asset_ids)[static_cast<std::size_t>(i)] << ","
            << format_double(reb.w(i)) << "\n";
      }
    }
  }
}

void write_trace_csv(std::ostream& out, const std::vector<QpTraceRow>& trace) {
  out << "iteration,mu,primal_residual,dual_residual,objective\n";
  for (const auto& t : trace) {
    out << t.iteration << "," << format_double(t.mu) << "," << format_double(t.primal_residual) << ","
        << format_double(t.dual_residual) << "," << format_double(t.objective) << "\n";
  }
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.finish();
}

std::string sha256_text(const std::string& text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.finish();
}

}  // namespace portrisk
