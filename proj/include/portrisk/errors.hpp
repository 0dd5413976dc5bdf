#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace portrisk {

/// Malformed or invalid input data. `line` is the 1-based CSV line when the
/// problem is tied to one row, 0 otherwise.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InsufficientUniverseError : public DataError {
 public:
  InsufficientUniverseError(std::size_t eligible, std::size_t requested, const std::string& date)
      : DataError("insufficient universe at " + date + ": " + std::to_string(eligible) +
                  " eligible assets, " + std::to_string(requested) + " requested"),
        eligible_(eligible) {}
  std::size_t eligible() const { return eligible_; }

 private:
  std::size_t eligible_;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> problems_;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a quadratic form that must be positive definite shows
/// non-positive curvature (or the model is declared unsupported for a
/// strategy that requires strict positive definiteness).
class NotPositiveDefiniteError : public SolverError {
 public:
  explicit NotPositiveDefiniteError(const std::string& model)
      : SolverError("risk model '" + model + "' is not positive definite"), model_(model) {}
  const std::string& model() const { return model_; }

 private:
  std::string model_;
};

}  // namespace portrisk
