#include "lucid/constraints.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lucid {
namespace {

Eigen::Index px_index(std::size_t vehicle) { return kVehicleStateDim * static_cast<Eigen::Index>(vehicle); }

ConstraintValue single_vehicle(std::size_t k, std::size_t vehicle) {
  ConstraintValue c;
  c.step = k;
  c.count = 2;
  c.index = {px_index(vehicle), px_index(vehicle) + 1, 0, 0};
  c.players = 1u << vehicle;
  return c;
}

constexpr double kDistanceSmoothing = 0.1;  // meters

// sqrt(d^2 + eps^2) - sqrt(||p - q||^2 + eps^2) over (p, q), or over p alone when q is fixed.
void distance_terms(double min_distance, const Eigen::Vector2d& delta, bool two_sided, ConstraintValue& c) {
  const double eps2 = kDistanceSmoothing * kDistanceSmoothing;
  const double s = std::sqrt(delta.squaredNorm() + eps2);
  c.value = std::sqrt(min_distance * min_distance + eps2) - s;
  const Eigen::Vector2d g = -delta / s;
  const Eigen::Matrix2d H = -(Eigen::Matrix2d::Identity() - delta * delta.transpose() / (s * s)) / s;
  c.grad.head<2>() = g;
  c.hess.topLeftCorner<2, 2>() = H;
  if (two_sided) {
    c.grad.tail<2>() = -g;
    c.hess.bottomRightCorner<2, 2>() = H;
    c.hess.topRightCorner<2, 2>() = -H;
    c.hess.bottomLeftCorner<2, 2>() = -H;
  }
}

}  // namespace

double SafetyEllipse::area() const { return std::numbers::pi * std::sqrt(std::max(0.0, shape.determinant())); }

Eigen::Vector2d SafetyEllipse::semi_axes() const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(shape, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
}

double safety_constraint_value(const Eigen::Vector2d& robot_position, const SafetyEllipse& e) {
  const Eigen::Vector2d d = robot_position - e.center;
  return 1.0 - d.dot(e.shape.ldlt().solve(d));
}

Eigen::Vector2d safety_constraint_gradient(const Eigen::Vector2d& robot_position, const SafetyEllipse& e) {
  const Eigen::Vector2d d = robot_position - e.center;
  return -2.0 * e.shape.ldlt().solve(d);
}

double RampBoundary::edge(double x) const {
  const double t = std::clamp((x - x_start) / (x_end - x_start), 0.0, 1.0);
  return y_start + (y_end - y_start) * t * t * (3.0 - 2.0 * t);
}

void evaluate_constraints_at(const Eigen::VectorXd& x, std::size_t k, const ConstraintSet& set,
                             std::vector<ConstraintValue>& out) {
  for (const auto& pair : set.collisions) {
    ConstraintValue c;
    c.step = k;
    c.count = 4;
    c.index = {px_index(pair.a), px_index(pair.a) + 1, px_index(pair.b), px_index(pair.b) + 1};
    c.players = (1u << pair.a) | (1u << pair.b);
    const Eigen::Vector2d delta = x.segment<2>(px_index(pair.a)) - x.segment<2>(px_index(pair.b));
    distance_terms(pair.min_distance, delta, true, c);
    out.push_back(c);
  }
  for (const auto& plane : set.half_planes) {
    ConstraintValue c = single_vehicle(k, plane.vehicle);
    c.value = plane.normal.dot(x.segment<2>(px_index(plane.vehicle))) - plane.offset;
    c.grad.head<2>() = plane.normal;
    out.push_back(c);
  }
  for (const auto& disk : set.obstacles) {
    ConstraintValue c = single_vehicle(k, disk.vehicle);
    const Eigen::Vector2d delta = x.segment<2>(px_index(disk.vehicle)) - disk.center;
    distance_terms(disk.min_distance, delta, false, c);
    out.push_back(c);
  }
  for (const auto& ramp : set.ramps) {
    ConstraintValue c = single_vehicle(k, ramp.vehicle);
    const double px = x(px_index(ramp.vehicle));
    const double py = x(px_index(ramp.vehicle) + 1);
    const double width = ramp.x_end - ramp.x_start;
    const double t = (px - ramp.x_start) / width;
    const double rise = ramp.y_end - ramp.y_start;
    double slope = 0.0;
    double curvature = 0.0;
    if (t > 0.0 && t < 1.0) {
      slope = rise * 6.0 * t * (1.0 - t) / width;
      curvature = rise * (6.0 - 12.0 * t) / (width * width);
    }
    c.value = ramp.edge(px) + ramp.margin - py;
    c.grad.head<2>() = Eigen::Vector2d{slope, -1.0};
    c.hess(0, 0) = curvature;
    out.push_back(c);
  }
  for (const auto& ellipse : set.ellipses) {
    if (ellipse.step != k) continue;
    ConstraintValue c = single_vehicle(k, set.robot);
    const Eigen::Vector2d p = x.segment<2>(px_index(set.robot));
    const Eigen::Matrix2d inv = ellipse.shape.inverse();
    const Eigen::Vector2d d = p - ellipse.center;
    c.value = 1.0 - d.dot(inv * d);
    c.grad.head<2>() = -2.0 * inv * d;
    c.hess.topLeftCorner<2, 2>() = -2.0 * inv;
    out.push_back(c);
  }
}

std::vector<ConstraintValue> evaluate_constraints(const StateTrajectory& X, const ConstraintSet& set) {
  std::vector<ConstraintValue> out;
  for (std::size_t k = 1; k < X.size(); ++k) evaluate_constraints_at(X[k].stacked(), k, set, out);
  return out;
}

double max_violation(const std::vector<ConstraintValue>& values) {
  double worst = 0.0;
  for (const auto& c : values) worst = std::max(worst, c.value);
  return worst;
}

double state_violation(const JointState& x, const ConstraintSet& set) {
  std::vector<ConstraintValue> out;
  ConstraintSet no_ellipses = set;
  no_ellipses.ellipses.clear();
  evaluate_constraints_at(x.stacked(), 0, no_ellipses, out);
  return max_violation(out);
}

}  // namespace lucid
