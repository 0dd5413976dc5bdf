#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "portrisk/data.hpp"

namespace portrisk {

/// Floor applied to raw variance estimates (monthly units).
inline constexpr double kVarianceFloor = 1e-10;
/// Margin kept between the clamped common correlation and its PSD limits.
inline constexpr double kRhoMargin = 1e-6;

/// V = sigma_f2 * b b' + Diag(d)
struct FactorModel {
  double sigma_f2 = 0.0;
  Eigen::VectorXd b;
  Eigen::VectorXd d;
};

/// V = rho * sigma sigma' + (1 - rho) * Diag(sigma)^2
struct ConstantCorrelationModel {
  double rho = 0.0;
  Eigen::VectorXd sigma;
};

/// Dense shrunk sample covariance. Unless PSD repair rewrote `v`, it is also
/// held as Diag(diag_part) + U Diag(signs) U' so products cost O(n T).
struct ShrunkSampleModel {
  Eigen::MatrixXd v;
  double delta = 0.0;
  bool psd_repaired = false;
  bool psd_repair_enabled = false;

  Eigen::VectorXd diag_part;
  Eigen::MatrixXd factor;
  Eigen::VectorXd factor_signs;
};

enum class ModelKind { SingleFactor, ConstantCorrelation, ShrunkSample };

inline constexpr ModelKind kAllModels[] = {ModelKind::SingleFactor, ModelKind::ConstantCorrelation,
                                           ModelKind::ShrunkSample};

/// Stable identifier, e.g. "single_factor".
std::string_view model_slug(ModelKind kind);
/// Human readable name, e.g. "Market Factor Risk Model".
std::string_view model_title(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view text);

struct RiskModel {
  std::vector<std::string> asset_ids;
  std::variant<FactorModel, ConstantCorrelationModel, ShrunkSampleModel> repr;

  ModelKind kind() const { return static_cast<ModelKind>(repr.index()); }
  std::size_t size() const { return asset_ids.size(); }
};

struct RiskModelOptions {
  std::optional<double> shrinkage_delta;  // default 1/3
  bool psd_repair = false;
  std::size_t dense_cap = 4000;
};

double shrink_beta(double beta_hat);

/// Shrinks the logs of positive values 1/3 of the way toward their
/// cross-sectional mean log. Equivalent whether applied to volatilities or
/// to variances.
Eigen::VectorXd shrink_log_variances(const Eigen::VectorXd& values);

/// `market_window(j)` must be the market return of the month held in column j
/// of `snapshot.window`.
FactorModel estimate_single_factor(const UniverseSnapshot& snapshot,
                                   const Eigen::VectorXd& market_window);
ConstantCorrelationModel estimate_constant_correlation(const UniverseSnapshot& snapshot);
ShrunkSampleModel estimate_shrunk_sample(const UniverseSnapshot& snapshot,
                                         std::optional<double> delta = std::nullopt,
                                         bool psd_repair = false);

RiskModel estimate_risk_model(ModelKind kind, const UniverseSnapshot& snapshot,
                              const Eigen::VectorXd& market_window,
                              const RiskModelOptions& options = {});

/// Computes V x using the structure of the model.
Eigen::VectorXd cov_matvec(const RiskModel& model, const Eigen::VectorXd& x);
void cov_matvec(const RiskModel& model, const Eigen::VectorXd& x, Eigen::VectorXd& out);

/// Dense V. Throws std::length_error when n exceeds `dense_cap`.
Eigen::MatrixXd materialize(const RiskModel& model, std::size_t dense_cap = 4000);

/// sqrt(diag(V)).
Eigen::VectorXd implied_volatilities(const RiskModel& model);

/// A positive diagonal D such that V - D has low rank when the model allows it.
/// Used to precondition iterative solves.
Eigen::VectorXd structural_diagonal(const RiskModel& model);

/// Writes the dense covariance as CSV with the asset ids as header.
void write_covariance_csv(std::ostream& out, const RiskModel& model, std::size_t dense_cap = 4000);

}  // namespace portrisk
