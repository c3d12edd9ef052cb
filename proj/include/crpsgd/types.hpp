#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace crpsgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Invalid sizes, parameter ranges, or schema violations. The CLI maps this
/// to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problem instances that cannot support the requested operation
/// (e.g. a zero matrix has no nonzero singular value).
class DegenerateProblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void check_dim(Eigen::Index expected, Eigen::Index got, const char* where) {
  if (expected != got) {
    throw ConfigError(std::string(where) + ": dimension mismatch, expected " +
                      std::to_string(expected) + " got " + std::to_string(got));
  }
}

}  // namespace crpsgd
