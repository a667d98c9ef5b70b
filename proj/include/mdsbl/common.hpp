#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mdsbl {

using Complex = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using RVector = Eigen::VectorXd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A position coincides with a sensor (or is otherwise not representable).
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// Factorization or solve failed even after regularization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Leave-one-out statistics are not defined for this atom (non-positive
/// denominator). Callers treat the probe as undetectable.
class DegenerateStatisticsError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Axis-aligned rectangle in meters.
struct Rect {
  Vec2 lower{0.0, 0.0};
  Vec2 upper{0.0, 0.0};

  bool contains(const Vec2& p) const {
    return p.x() >= lower.x() && p.x() <= upper.x() && p.y() >= lower.y() && p.y() <= upper.y();
  }
  Vec2 clamp(const Vec2& p) const { return p.cwiseMax(lower).cwiseMin(upper); }
  bool valid() const { return (upper.array() > lower.array()).all(); }
};

}  // namespace mdsbl
