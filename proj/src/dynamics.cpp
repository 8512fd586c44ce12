#include "lucid/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace lucid {
namespace {

void require_finite(const VehicleState& s, const VehicleControl& c, double h) {
  const bool ok = std::isfinite(s.px) && std::isfinite(s.py) && std::isfinite(s.heading) &&
                  std::isfinite(s.speed) && std::isfinite(c.yaw_rate) && std::isfinite(c.accel) &&
                  std::isfinite(h);
  if (!ok) throw std::domain_error("unicycle step: non-finite input");
  if (h <= 0.0) throw std::invalid_argument("unicycle step: time step must be positive");
}

}  // namespace

Eigen::VectorXd JointState::stacked() const {
  Eigen::VectorXd x(kVehicleStateDim * vehicles.size());
  for (std::size_t i = 0; i < vehicles.size(); ++i)
    x.segment<kVehicleStateDim>(kVehicleStateDim * i) = vehicles[i].vector();
  return x;
}

JointState JointState::from_stacked(const Eigen::VectorXd& x) {
  if (x.size() % kVehicleStateDim != 0)
    throw std::invalid_argument("joint state: stacked size is not a multiple of 4");
  JointState out;
  out.vehicles.reserve(x.size() / kVehicleStateDim);
  for (Eigen::Index i = 0; i < x.size(); i += kVehicleStateDim)
    out.vehicles.push_back(VehicleState::from_vector(x.segment<kVehicleStateDim>(i)));
  return out;
}

Eigen::VectorXd JointControl::stacked() const {
  Eigen::VectorXd u(kVehicleControlDim * controls.size());
  for (std::size_t i = 0; i < controls.size(); ++i)
    u.segment<kVehicleControlDim>(kVehicleControlDim * i) = controls[i].vector();
  return u;
}

JointControl JointControl::from_stacked(const Eigen::VectorXd& u) {
  if (u.size() % kVehicleControlDim != 0)
    throw std::invalid_argument("joint control: stacked size is not a multiple of 2");
  JointControl out;
  out.controls.reserve(u.size() / kVehicleControlDim);
  for (Eigen::Index i = 0; i < u.size(); i += kVehicleControlDim)
    out.controls.push_back(VehicleControl::from_vector(u.segment<kVehicleControlDim>(i)));
  return out;
}

// Midpoint rule. The vector field does not depend on position, so only the
// heading and speed at the half step enter the update.
VehicleState unicycle_step(const VehicleState& s, const VehicleControl& c, double h) {
  require_finite(s, c, h);
  const double heading_mid = s.heading + 0.5 * h * c.yaw_rate;
  const double speed_mid = s.speed + 0.5 * h * c.accel;
  return {s.px + h * speed_mid * std::cos(heading_mid), s.py + h * speed_mid * std::sin(heading_mid),
          s.heading + h * c.yaw_rate, s.speed + h * c.accel};
}

StepJacobians step_jacobians(const VehicleState& s, const VehicleControl& c, double h) {
  require_finite(s, c, h);
  const double heading_mid = s.heading + 0.5 * h * c.yaw_rate;
  const double speed_mid = s.speed + 0.5 * h * c.accel;
  const double cm = std::cos(heading_mid);
  const double sm = std::sin(heading_mid);

  StepJacobians J;
  J.state.setIdentity();
  J.state(0, 2) = -h * speed_mid * sm;
  J.state(0, 3) = h * cm;
  J.state(1, 2) = h * speed_mid * cm;
  J.state(1, 3) = h * sm;

  J.control.setZero();
  J.control(0, 0) = -0.5 * h * h * speed_mid * sm;
  J.control(0, 1) = 0.5 * h * h * cm;
  J.control(1, 0) = 0.5 * h * h * speed_mid * cm;
  J.control(1, 1) = 0.5 * h * h * sm;
  J.control(2, 0) = h;
  J.control(3, 1) = h;
  return J;
}

Eigen::Matrix<double, 6, 6> step_curvature(const VehicleState& s, const VehicleControl& c, double h,
                                           const Eigen::Vector4d& costate) {
  require_finite(s, c, h);
  const double heading_mid = s.heading + 0.5 * h * c.yaw_rate;
  const double speed_mid = s.speed + 0.5 * h * c.accel;
  const double cm = std::cos(heading_mid);
  const double sm = std::sin(heading_mid);

  // Hessians of px' and py' with respect to (heading_mid, speed_mid).
  Eigen::Matrix2d hx;
  hx << -h * speed_mid * cm, -h * sm, -h * sm, 0.0;
  Eigen::Matrix2d hy;
  hy << -h * speed_mid * sm, h * cm, h * cm, 0.0;
  const Eigen::Matrix2d w = costate(0) * hx + costate(1) * hy;

  // (heading_mid, speed_mid) as a linear map of (px, py, heading, speed, yaw_rate, accel).
  Eigen::Matrix<double, 2, 6> lift = Eigen::Matrix<double, 2, 6>::Zero();
  lift(0, 2) = 1.0;
  lift(0, 4) = 0.5 * h;
  lift(1, 3) = 1.0;
  lift(1, 5) = 0.5 * h;
  return lift.transpose() * w * lift;
}

JointState joint_step(const JointState& x, const JointControl& u, double h) {
  if (x.size() != u.size())
    throw std::invalid_argument("joint step: state and control vehicle counts differ");
  JointState out;
  out.vehicles.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.vehicles.push_back(unicycle_step(x[i], u[i], h));
  return out;
}

JointControl controls_at(const ControlProfile& U, std::size_t k) {
  JointControl u;
  u.controls.reserve(U.size());
  for (const auto& seq : U) u.controls.push_back(seq.at(k));
  return u;
}

StateTrajectory rollout(const JointState& x0, const ControlProfile& U, double h) {
  if (U.size() != x0.size()) throw std::invalid_argument("rollout: one control sequence per vehicle required");
  const std::size_t steps = U.empty() ? 0 : U.front().size();
  for (const auto& seq : U)
    if (seq.size() != steps) throw std::invalid_argument("rollout: control sequences differ in length");

  StateTrajectory X;
  X.reserve(steps + 1);
  X.push_back(x0);
  for (std::size_t k = 0; k < steps; ++k) X.push_back(joint_step(X.back(), controls_at(U, k), h));
  return X;
}

}  // namespace lucid
