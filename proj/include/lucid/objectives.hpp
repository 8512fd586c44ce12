#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

#include "lucid/dynamics.hpp"

namespace lucid {

/// The three objective parameters estimated for each non-robot agent.
struct ObjectiveParams {
  double desired_speed = 0.0;   // m/s
  double desired_lane_y = 0.0;  // m, lateral position of the desired lane center
  double aggressiveness = 0.0;  // weight of the proximity penalty, clamped >= 0 where used

  bool operator==(const ObjectiveParams&) const = default;
};

inline constexpr int kParamsPerAgent = 3;

/// Cost matrices act on the player's own vehicle state/control. The proximity
/// penalty switches on below activation_scale * (r_self + r_other).
struct CostWeights {
  Eigen::Matrix4d state = Eigen::Matrix4d::Zero();
  Eigen::Matrix2d control = Eigen::Matrix2d::Identity();
  Eigen::Matrix4d terminal = Eigen::Matrix4d::Zero();
  double activation_scale = 2.5;
  std::vector<double> collision_radii;  // one per vehicle, JointState order

  /// Throws std::invalid_argument when a matrix is not symmetric PSD/PD or eta <= 1.
  void validate(std::size_t vehicle_count) const;
};

/// Flat parameter vector: agents in JointState order (robot skipped), each
/// contributing (desired_speed, desired_lane_y, aggressiveness).
using ThetaVector = Eigen::VectorXd;

ThetaVector pack_theta(std::span<const ObjectiveParams> params);
std::vector<ObjectiveParams> unpack_theta(const ThetaVector& theta);

/// Per-vehicle params for all M players: robot's own params at robot_index,
/// the others unpacked from theta.
std::vector<ObjectiveParams> expand_params(const ThetaVector& theta, const ObjectiveParams& robot,
                                           std::size_t robot_index);

/// Desired vehicle state. Longitudinal position is a placeholder; it must carry zero weight.
Eigen::Vector4d desired_state(const ObjectiveParams& p);

/// gamma * (max(0, activation - ||pa - pb||))^2 for one pair at one step.
double proximity_penalty(const Eigen::Vector2d& pa, const Eigen::Vector2d& pb, double activation,
                         double gamma);

/// Full trajectory cost of player `player`: stage tracking and control terms
/// for steps 1..N-1, terminal tracking at N, proximity penalties at every step.
double evaluate_cost(const StateTrajectory& X, const ControlSequence& U, const ObjectiveParams& params,
                     const CostWeights& weights, std::size_t player);

/// The cost written as phi(X, U)^T theta_lifted. Layout of both vectors:
///   [0]    sum of 1/2 x^T Q x, 1/2 u^T R u and 1/2 x_N^T Qf x_N   (coefficient 1)
///   [1..4] -(sum_k Q x_k + Qf x_N)                                (coefficient x_f)
///   [5]    1                                                       (coefficient 1/2 x_f^T (sum Q) x_f)
///   [6]    sum of squared proximity hinges                         (coefficient gamma)
/// The cost is quadratic in x_f and linear in gamma, so it is linear in theta_lifted.
struct FeatureExpansion {
  Eigen::VectorXd features;
  Eigen::VectorXd lifted_weights;
};
inline constexpr int kFeatureCount = 7;

Eigen::VectorXd cost_features(const StateTrajectory& X, const ControlSequence& U, const CostWeights& weights,
                              std::size_t player);
Eigen::VectorXd lifted_weights(const ObjectiveParams& params, const CostWeights& weights, std::size_t horizon);
FeatureExpansion feature_expansion(const StateTrajectory& X, const ControlSequence& U,
                                   const ObjectiveParams& params, const CostWeights& weights, std::size_t player);

/// Derivatives of one player's cost at a single time step with respect to the
/// stacked joint state (4M) and the player's own control. Hessians are exact
/// away from the proximity hinge kink.
struct StageDerivatives {
  double value = 0.0;
  Eigen::VectorXd state_grad;
  Eigen::MatrixXd state_hess;
  Eigen::Vector2d control_grad = Eigen::Vector2d::Zero();
  Eigen::Matrix2d control_hess = Eigen::Matrix2d::Zero();
};

/// k in [0, horizon); control is ignored (may be null) at the terminal step.
void stage_derivatives(const Eigen::VectorXd& x, const Eigen::Vector2d* control, std::size_t k,
                       std::size_t horizon, const ObjectiveParams& params, const CostWeights& weights,
                       std::size_t player, StageDerivatives& out);

struct CostDerivatives {
  std::vector<Eigen::VectorXd> state_grad;  // N entries of size 4M
  std::vector<Eigen::MatrixXd> state_hess;  // N entries of size 4M x 4M
  std::vector<Eigen::Vector2d> control_grad;  // N-1 entries
  std::vector<Eigen::Matrix2d> control_hess;  // N-1 entries
};

CostDerivatives cost_derivatives(const StateTrajectory& X, const ControlSequence& U,
                                 const ObjectiveParams& params, const CostWeights& weights, std::size_t player);

}  // namespace lucid
