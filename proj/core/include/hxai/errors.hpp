#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hxai {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Quadrature or root-finding failed; `what()` carries the diagnostics.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// A price sits on or outside its no-arbitrage bounds.
class NoSolution : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class PreprocessingError : public Error {
 public:
  PreprocessingError(const std::string& msg, std::size_t rank_deficiency)
      : Error(msg), rank_deficiency_(rank_deficiency) {}
  std::size_t rank_deficiency() const noexcept { return rank_deficiency_; }

 private:
  std::size_t rank_deficiency_;
};

class SamplingExhausted : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ArchitectureMismatch : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& msg, int epoch) : Error(msg), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class DegenerateFit : public Error {
 public:
  using Error::Error;
};

/// Pricing failure at one grid location of a surface.
class SurfaceError : public Error {
 public:
  SurfaceError(const std::string& msg, std::size_t maturity_index, std::size_t strike_index)
      : Error(msg), maturity_index_(maturity_index), strike_index_(strike_index) {}
  std::size_t maturity_index() const noexcept { return maturity_index_; }
  std::size_t strike_index() const noexcept { return strike_index_; }

 private:
  std::size_t maturity_index_;
  std::size_t strike_index_;
};

/// Configuration rejected before any work started. Holds every violation.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

/// Required input files are missing; lists all of them.
class MissingInputs : public Error {
 public:
  explicit MissingInputs(std::vector<std::string> paths)
      : Error(join(paths)), paths_(std::move(paths)) {}
  const std::vector<std::string>& paths() const noexcept { return paths_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "missing inputs:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> paths_;
};

}  // namespace hxai
