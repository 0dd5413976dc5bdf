#pragma once

// Helpers shared by the unit tests. Kept deliberately naive: these are the
// reference computations the library is checked against.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "portrisk/data.hpp"
#include "portrisk/risk_models.hpp"

namespace testing_support {

inline std::vector<std::string> ids(std::size_t n, const std::string& prefix = "A") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s = std::to_string(i);
    out.push_back(prefix + std::string(4 - std::min<std::size_t>(4, s.size()), '0') + s);
  }
  return out;
}

inline portrisk::UniverseSnapshot snapshot(const Eigen::MatrixXd& window, Eigen::VectorXd caps = {}) {
  portrisk::UniverseSnapshot s;
  s.date = portrisk::YearMonth(2000, 1);
  s.asset_ids = ids(static_cast<std::size_t>(window.rows()));
  for (std::size_t i = 0; i < s.asset_ids.size(); ++i) s.panel_index.push_back(i);
  s.window = window;
  s.caps = caps.size() ? caps : Eigen::VectorXd::Ones(window.rows());
  return s;
}

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = z(rng);
  return m;
}

// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(Eigen::Index n, std::mt19937_64& rng, double lo = 0.1, double hi = 2.0) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(n, n, rng));
  Eigen::MatrixXd q = qr.householderQ();
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd lambda(n);
  for (Eigen::Index i = 0; i < n; ++i) lambda(i) = u(rng);
  Eigen::MatrixXd v = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (v + v.transpose());
}

// Wraps an arbitrary dense matrix as a risk model (no low-rank split).
inline portrisk::RiskModel dense_model(const Eigen::MatrixXd& v) {
  portrisk::ShrunkSampleModel m;
  m.v = v;
  m.psd_repair_enabled = true;
  portrisk::RiskModel model;
  model.asset_ids = ids(static_cast<std::size_t>(v.rows()));
  model.repr = m;
  return model;
}

inline portrisk::RiskModel diagonal_model(const Eigen::VectorXd& sigma) {
  portrisk::FactorModel f;
  f.sigma_f2 = 1.0;
  f.b = Eigen::VectorXd::Zero(sigma.size());
  f.d = sigma.cwiseAbs2();
  portrisk::RiskModel model;
  model.asset_ids = ids(static_cast<std::size_t>(sigma.size()));
  model.repr = f;
  return model;
}

inline double max_rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return ((a - b).array().abs() / b.array().abs()).maxCoeff();
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("portrisk-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace testing_support
