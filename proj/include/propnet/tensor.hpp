#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace propnet {

/// Dense row-major f64 matrix. Rows index items (objects, relations,
/// samples), columns index features.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vec2 = Eigen::Vector2d;

/// Raised when an operation is called on an object that is not ready for
/// it (missing normalization statistics, exhausted control horizon, ...).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a numerical computation produces NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, long index)
      : std::runtime_error(what + " (at index " + std::to_string(index) + ")"), index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

}  // namespace propnet
