#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

namespace lucid {

/// Planar unicycle state. Heading is never wrapped so trajectories stay smooth.
struct VehicleState {
  double px = 0.0;       // m
  double py = 0.0;       // m
  double heading = 0.0;  // rad
  double speed = 0.0;    // m/s

  Eigen::Vector4d vector() const { return {px, py, heading, speed}; }
  static VehicleState from_vector(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
  bool operator==(const VehicleState&) const = default;
};

struct VehicleControl {
  double yaw_rate = 0.0;  // rad/s
  double accel = 0.0;     // m/s^2

  Eigen::Vector2d vector() const { return {yaw_rate, accel}; }
  static VehicleControl from_vector(const Eigen::Vector2d& v) { return {v(0), v(1)}; }
  bool operator==(const VehicleControl&) const = default;
};

inline constexpr int kVehicleStateDim = 4;
inline constexpr int kVehicleControlDim = 2;

/// States of all M vehicles at one time step, in a fixed order for the whole run.
struct JointState {
  std::vector<VehicleState> vehicles;

  std::size_t size() const { return vehicles.size(); }
  VehicleState& operator[](std::size_t i) { return vehicles[i]; }
  const VehicleState& operator[](std::size_t i) const { return vehicles[i]; }

  /// [px0 py0 psi0 v0 px1 ...]
  Eigen::VectorXd stacked() const;
  static JointState from_stacked(const Eigen::VectorXd& x);
  bool operator==(const JointState&) const = default;
};

struct JointControl {
  std::vector<VehicleControl> controls;

  std::size_t size() const { return controls.size(); }
  VehicleControl& operator[](std::size_t i) { return controls[i]; }
  const VehicleControl& operator[](std::size_t i) const { return controls[i]; }

  Eigen::VectorXd stacked() const;
  static JointControl from_stacked(const Eigen::VectorXd& u);
};

/// One player's control sequence over a horizon (length N-1).
using ControlSequence = std::vector<VehicleControl>;
/// Control sequences of every player, indexed by player.
using ControlProfile = std::vector<ControlSequence>;
/// Joint states x_1 .. x_N.
using StateTrajectory = std::vector<JointState>;

struct StepJacobians {
  Eigen::Matrix4d state;                                    // d s' / d s
  Eigen::Matrix<double, kVehicleStateDim, kVehicleControlDim> control;  // d s' / d c
};

/// Explicit midpoint (RK2) step of the unicycle model. Throws on non-finite input or h <= 0.
VehicleState unicycle_step(const VehicleState& s, const VehicleControl& c, double h);

/// Analytic Jacobians of unicycle_step.
StepJacobians step_jacobians(const VehicleState& s, const VehicleControl& c, double h);

/// Second-order term of unicycle_step contracted with a costate:
/// sum_i costate_i * Hessian(s'_i) over the stacked variable (s, c), 6x6.
Eigen::Matrix<double, 6, 6> step_curvature(const VehicleState& s, const VehicleControl& c, double h,
                                           const Eigen::Vector4d& costate);

/// Decoupled joint propagation: each vehicle follows its own unicycle.
JointState joint_step(const JointState& x, const JointControl& u, double h);

/// Joint control at step k taken from a per-player profile.
JointControl controls_at(const ControlProfile& U, std::size_t k);

/// X[0] = x0, X[k+1] = joint_step(X[k], U[.][k]). Each sequence must have the same length.
StateTrajectory rollout(const JointState& x0, const ControlProfile& U, double h);

}  // namespace lucid
