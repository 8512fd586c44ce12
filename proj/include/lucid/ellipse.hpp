#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace lucid {

/// Keep-out region {p : (p - c)^T E^-1 (p - c) <= 1} around one agent at one
/// horizon step, imposed on the robot only.
struct SafetyEllipse {
  std::size_t agent = 0;
  std::size_t step = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Matrix2d shape = Eigen::Matrix2d::Identity();

  double area() const;
  /// Semi-axis lengths, ascending.
  Eigen::Vector2d semi_axes() const;
};

/// 1 - (p - c)^T E^-1 (p - c); <= 0 means p is outside the ellipse.
double safety_constraint_value(const Eigen::Vector2d& robot_position, const SafetyEllipse& e);
Eigen::Vector2d safety_constraint_gradient(const Eigen::Vector2d& robot_position, const SafetyEllipse& e);

}  // namespace lucid
