#include "portrisk/risk_models.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace portrisk {
namespace {

constexpr double kShrink = 1.0 / 3.0;

// Row-centred copy of the return window.
Eigen::MatrixXd centred(const Eigen::MatrixXd& window) {
  Eigen::VectorXd means = window.rowwise().mean();
  return window.colwise() - means;
}

double clamp_rho(double rho, std::size_t n) {
  const double lo = -1.0 / (static_cast<double>(n) - 1.0) + kRhoMargin;
  const double hi = 1.0 - kRhoMargin;
  return std::clamp(rho, lo, hi);
}

// Mean of the off-diagonal correlations of the rows of `xc`, given each
// row's standard deviation.
double average_correlation(const Eigen::MatrixXd& xc, const Eigen::VectorXd& sd, double denom) {
  const auto n = xc.rows();
  Eigen::MatrixXd z = (sd.cwiseInverse() / std::sqrt(denom)).asDiagonal() * xc;
  const double total = z.colwise().sum().squaredNorm();
  const double diag = z.rowwise().squaredNorm().sum();
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return (total - diag) / 2.0 / pairs;
}

void require_window(const UniverseSnapshot& snapshot, Eigen::Index min_t) {
  if (snapshot.window.rows() != static_cast<Eigen::Index>(snapshot.size())) {
    throw std::invalid_argument("snapshot window rows do not match asset count");
  }
  if (snapshot.window.cols() < min_t) {
    throw std::invalid_argument("return window has " + std::to_string(snapshot.window.cols()) +
                                " months, need at least " + std::to_string(min_t));
  }
}

}  // namespace

std::string_view model_slug(ModelKind kind) {
  switch (kind) {
    case ModelKind::SingleFactor: return "single_factor";
    case ModelKind::ConstantCorrelation: return "constant_correlation";
    case ModelKind::ShrunkSample: return "shrunk_sample";
  }
  return "unknown";
}

std::string_view model_title(ModelKind kind) {
  switch (kind) {
    case ModelKind::SingleFactor: return "Market Factor Risk Model";
    case ModelKind::ConstantCorrelation: return "Constant Correlation Covariance Model";
    case ModelKind::ShrunkSample: return "Shrunk Sample Covariance Matrix";
  }
  return "unknown";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) {
  for (auto kind : kAllModels) {
    if (model_slug(kind) == text) return kind;
  }
  return std::nullopt;
}

double shrink_beta(double beta_hat) {
  if (!std::isfinite(beta_hat)) throw std::invalid_argument("shrink_beta: non-finite input");
  return beta_hat + kShrink * (1.0 - beta_hat);
}

Eigen::VectorXd shrink_log_variances(const Eigen::VectorXd& values) {
  if (values.size() == 0) return values;
  if (!(values.array() > 0.0).all() || !values.allFinite()) {
    throw std::invalid_argument("shrink_log_variances: inputs must be positive and finite");
  }
  Eigen::ArrayXd logs = values.array().log();
  const double mean_log = logs.mean();
  Eigen::ArrayXd shrunk = logs + kShrink * (mean_log - logs);
  Eigen::VectorXd out = shrunk.exp().matrix();
  // single-element and constant inputs map to themselves exactly
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (logs(i) == mean_log) out(i) = values(i);
  }
  return out;
}

FactorModel estimate_single_factor(const UniverseSnapshot& snapshot,
                                   const Eigen::VectorXd& market_window) {
  require_window(snapshot, 24);
  const auto t_len = snapshot.window.cols();
  if (market_window.size() != t_len) {
    throw std::invalid_argument("market window length does not match return window");
  }
  const Eigen::VectorXd mc = market_window.array() - market_window.mean();
  const double mkt_ss = mc.squaredNorm();
  const double sigma_f2 = mkt_ss / static_cast<double>(t_len - 1);
  // centring a constant series leaves rounding noise, not variance
  if (!(mkt_ss > 1e-24 * market_window.squaredNorm()) || !(sigma_f2 > 0.0)) {
    throw std::invalid_argument("market window has zero variance");
  }

  const Eigen::MatrixXd xc = centred(snapshot.window);
  const Eigen::VectorXd beta_hat = xc * mc / mkt_ss;
  const Eigen::MatrixXd resid = xc - beta_hat * mc.transpose();
  Eigen::VectorXd omega2 = resid.rowwise().squaredNorm() / static_cast<double>(t_len - 2);
  omega2 = omega2.cwiseMax(kVarianceFloor);

  FactorModel model;
  model.sigma_f2 = sigma_f2;
  model.b = beta_hat.unaryExpr([](double b) { return shrink_beta(b); });
  model.d = shrink_log_variances(omega2);
  return model;
}

ConstantCorrelationModel estimate_constant_correlation(const UniverseSnapshot& snapshot) {
  require_window(snapshot, 24);
  const std::size_t n = snapshot.size();
  if (n < 2) throw std::invalid_argument("constant correlation needs at least two assets");
  const double denom = static_cast<double>(snapshot.window.cols() - 1);

  const Eigen::MatrixXd xc = centred(snapshot.window);
  Eigen::VectorXd var = (xc.rowwise().squaredNorm() / denom).cwiseMax(kVarianceFloor);
  Eigen::VectorXd sd = var.cwiseSqrt();

  ConstantCorrelationModel model;
  model.rho = clamp_rho(average_correlation(xc, sd, denom), n);
  model.sigma = shrink_log_variances(sd);
  return model;
}

ShrunkSampleModel estimate_shrunk_sample(const UniverseSnapshot& snapshot,
                                         std::optional<double> delta, bool psd_repair) {
  require_window(snapshot, 2);
  const double intensity = delta.value_or(kShrink);
  if (!(intensity >= 0.0 && intensity <= 1.0)) {
    throw std::invalid_argument("shrinkage delta must lie in [0, 1]");
  }
  const auto n = static_cast<Eigen::Index>(snapshot.size());
  const auto t_len = snapshot.window.cols();
  const double denom = static_cast<double>(t_len - 1);

  const Eigen::MatrixXd xc = centred(snapshot.window);
  Eigen::MatrixXd sample = Eigen::MatrixXd::Zero(n, n);
  sample.selfadjointView<Eigen::Lower>().rankUpdate(xc, 1.0 / denom);
  sample.triangularView<Eigen::StrictlyUpper>() = sample.transpose();

  Eigen::VectorXd sd = sample.diagonal().cwiseMax(kVarianceFloor).cwiseSqrt();
  const double rho = n >= 2 ? clamp_rho(average_correlation(xc, sd, denom), snapshot.size()) : 0.0;

  ShrunkSampleModel model;
  model.delta = intensity;
  model.psd_repair_enabled = psd_repair;
  Eigen::MatrixXd target = rho * sd * sd.transpose();
  target.diagonal() = sd.cwiseAbs2();
  model.v = intensity * target + (1.0 - intensity) * sample;

  model.diag_part = intensity * (1.0 - rho) * sd.cwiseAbs2();
  model.factor.resize(n, t_len + 1);
  model.factor.col(0) = std::sqrt(intensity * std::abs(rho)) * sd;
  model.factor.rightCols(t_len) = std::sqrt((1.0 - intensity) / denom) * xc;
  model.factor_signs = Eigen::VectorXd::Ones(t_len + 1);
  model.factor_signs(0) = rho < 0.0 ? -1.0 : 1.0;

  if (psd_repair && n > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(model.v);
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double floor = 1e-8 * std::max(lambda.maxCoeff(), 0.0);
    if (lambda.minCoeff() < floor) {
      Eigen::VectorXd clipped = lambda.cwiseMax(floor);
      model.v = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
      model.v = 0.5 * (model.v + model.v.transpose()).eval();
      model.psd_repaired = true;
      model.diag_part = model.v.diagonal();
      model.factor.resize(n, 0);
      model.factor_signs.resize(0);
    }
  }
  return model;
}

RiskModel estimate_risk_model(ModelKind kind, const UniverseSnapshot& snapshot,
                              const Eigen::VectorXd& market_window,
                              const RiskModelOptions& options) {
  RiskModel model;
  model.asset_ids = snapshot.asset_ids;
  switch (kind) {
    case ModelKind::SingleFactor:
      model.repr = estimate_single_factor(snapshot, market_window);
      break;
    case ModelKind::ConstantCorrelation:
      model.repr = estimate_constant_correlation(snapshot);
      break;
    case ModelKind::ShrunkSample:
      if (snapshot.size() > options.dense_cap) {
        throw std::length_error("shrunk sample model of size " + std::to_string(snapshot.size()) +
                                " exceeds dense cap " + std::to_string(options.dense_cap));
      }
      model.repr = estimate_shrunk_sample(snapshot, options.shrinkage_delta, options.psd_repair);
      break;
  }
  return model;
}

void cov_matvec(const RiskModel& model, const Eigen::VectorXd& x, Eigen::VectorXd& out) {
  if (x.size() != static_cast<Eigen::Index>(model.size())) {
    throw std::invalid_argument("cov_matvec: dimension mismatch (" + std::to_string(x.size()) +
                                " vs " + std::to_string(model.size()) + ")");
  }
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FactorModel>) {
          out = (m.sigma_f2 * m.b.dot(x)) * m.b + m.d.cwiseProduct(x);
        } else if constexpr (std::is_same_v<T, ConstantCorrelationModel>) {
          out = (m.rho * m.sigma.dot(x)) * m.sigma +
                (1.0 - m.rho) * m.sigma.cwiseAbs2().cwiseProduct(x);
        } else {
          if (m.factor.cols() > 0) {
            Eigen::VectorXd proj = m.factor.transpose() * x;
            proj.array() *= m.factor_signs.array();
            out.noalias() = m.factor * proj;
            out += m.diag_part.cwiseProduct(x);
          } else {
            out.noalias() = m.v * x;
          }
        }
      },
      model.repr);
}

Eigen::VectorXd cov_matvec(const RiskModel& model, const Eigen::VectorXd& x) {
  Eigen::VectorXd out(x.size());
  cov_matvec(model, x, out);
  return out;
}

Eigen::MatrixXd materialize(const RiskModel& model, std::size_t dense_cap) {
  if (model.size() > dense_cap) {
    throw std::length_error("materialize: n = " + std::to_string(model.size()) +
                            " exceeds dense cap " + std::to_string(dense_cap));
  }
  return std::visit(
      [](const auto& m) -> Eigen::MatrixXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FactorModel>) {
          Eigen::MatrixXd v = m.sigma_f2 * m.b * m.b.transpose();
          v.diagonal() += m.d;
          return v;
        } else if constexpr (std::is_same_v<T, ConstantCorrelationModel>) {
          Eigen::MatrixXd v = m.rho * m.sigma * m.sigma.transpose();
          // diagonal set directly so that diag(V) = sigma^2 holds exactly
          v.diagonal() = m.sigma.cwiseAbs2();
          return v;
        } else {
          return m.v;
        }
      },
      model.repr);
}

Eigen::VectorXd implied_volatilities(const RiskModel& model) {
  return std::visit(
      [](const auto& m) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FactorModel>) {
          return (m.sigma_f2 * m.b.cwiseAbs2() + m.d).cwiseSqrt();
        } else if constexpr (std::is_same_v<T, ConstantCorrelationModel>) {
          return m.sigma;
        } else {
          return m.v.diagonal().cwiseMax(0.0).cwiseSqrt();
        }
      },
      model.repr);
}

Eigen::VectorXd structural_diagonal(const RiskModel& model) {
  return std::visit(
      [](const auto& m) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FactorModel>) {
          return m.d;
        } else if constexpr (std::is_same_v<T, ConstantCorrelationModel>) {
          return ((1.0 - m.rho) * m.sigma.cwiseAbs2()).cwiseMax(kVarianceFloor);
        } else {
          Eigen::VectorXd full = m.v.diagonal();
          // a model built from a bare dense matrix has no split
          if (m.diag_part.size() != full.size()) return full.cwiseMax(kVarianceFloor);
          return m.diag_part.cwiseMax(1e-3 * full).cwiseMax(kVarianceFloor);
        }
      },
      model.repr);
}

void write_covariance_csv(std::ostream& out, const RiskModel& model, std::size_t dense_cap) {
  const Eigen::MatrixXd v = materialize(model, dense_cap);
  for (std::size_t j = 0; j < model.asset_ids.size(); ++j) {
    out << (j ? "," : "") << model.asset_ids[j];
  }
  out << '\n';
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      out << (j ? "," : "") << format_double(v(i, j));
    }
    out << '\n';
  }
}

}  // namespace portrisk
