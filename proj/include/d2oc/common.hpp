#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace d2oc {

using Vec2 = Eigen::Vector2d;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A density field or grid that cannot be used (bad mixture, mass outside the domain).
class InvalidFieldError : public Error {
 public:
  using Error::Error;
};

// A mass-balance constraint cannot be met (transport, subset selection, weight update).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Linear algebra broke down: singular or badly conditioned system.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Bad user configuration; the message names the offending key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Axis-aligned rectangle in metres.
struct Rect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  bool contains(const Vec2& p) const {
    return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max;
  }
};

}  // namespace d2oc
