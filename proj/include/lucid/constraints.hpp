#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "lucid/dynamics.hpp"
#include "lucid/ellipse.hpp"

namespace lucid {

/// ||p_a - p_b|| >= min_distance, written with a 0.1 m smoothed distance
/// sqrt(min_distance^2 + eps^2) - sqrt(||p_a - p_b||^2 + eps^2) <= 0.
struct CollisionPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double min_distance = 0.0;
};

/// normal . p <= offset for one vehicle (offset already includes the vehicle radius).
struct HalfPlane {
  std::size_t vehicle = 0;
  Eigen::Vector2d normal = Eigen::Vector2d::UnitY();
  double offset = 0.0;
};

/// Static disk kept clear by one vehicle, same smoothed form as CollisionPair.
struct DiskKeepOut {
  std::size_t vehicle = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double min_distance = 0.0;
};

/// Lower road edge of a merge ramp: py >= edge(px) + margin, where edge blends
/// from y_start to y_end between x_start and x_end with a C1 smoothstep.
struct RampBoundary {
  std::size_t vehicle = 0;
  double x_start = 0.0;
  double x_end = 1.0;
  double y_start = 0.0;
  double y_end = 0.0;
  double margin = 0.0;

  double edge(double x) const;
};

struct ConstraintSet {
  std::vector<CollisionPair> collisions;
  std::vector<HalfPlane> half_planes;
  std::vector<DiskKeepOut> obstacles;
  std::vector<RampBoundary> ramps;
  std::vector<SafetyEllipse> ellipses;  // robot-only
  std::size_t robot = 0;
};

/// One scalar inequality at one step. It touches at most four entries of the
/// stacked joint state; grad/hess are over those entries.
struct ConstraintValue {
  std::size_t step = 0;
  double value = 0.0;
  std::array<Eigen::Index, 4> index{};
  int count = 0;
  Eigen::Vector4d grad = Eigen::Vector4d::Zero();
  Eigen::Matrix4d hess = Eigen::Matrix4d::Zero();
  std::uint32_t players = 0;  // bit i set: shared by player i's Lagrangian
};

/// Appends every constraint active at step k (k >= 1) in a fixed order:
/// collisions, half-planes, obstacles, ramps, then ellipses tagged with step k.
void evaluate_constraints_at(const Eigen::VectorXd& x, std::size_t k, const ConstraintSet& set,
                             std::vector<ConstraintValue>& out);

/// All constraints along a trajectory, steps 1..N-1 (step 0 is the fixed initial state).
std::vector<ConstraintValue> evaluate_constraints(const StateTrajectory& X, const ConstraintSet& set);

/// Largest value among constraints (0 when there are none).
double max_violation(const std::vector<ConstraintValue>& values);

/// Every constraint at a single joint state, including step 0 (used to check initial feasibility).
double state_violation(const JointState& x, const ConstraintSet& set);

}  // namespace lucid
