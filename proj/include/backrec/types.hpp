#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace backrec {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::VectorX<Scalar>;

// Spatial points and coefficient blocks are fixed 2x2; one-dimensional
// fields read/write only the leading entry.
template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;

/// Raised when a configuration file cannot be parsed or resolved.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an iterative solver fails to reach its tolerance.
class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, int iterations, double residual)
      : std::runtime_error(what), iterations_(iterations), residual_(residual) {}

  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

}  // namespace backrec
