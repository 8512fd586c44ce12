#include "lucid/objectives.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lucid {
namespace {

bool symmetric(const Eigen::MatrixXd& m) { return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12; }

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double activation_distance(const CostWeights& w, std::size_t a, std::size_t b) {
  return w.activation_scale * (w.collision_radii[a] + w.collision_radii[b]);
}

void check_shapes(const StateTrajectory& X, const ControlSequence& U, const CostWeights& weights,
                  std::size_t player) {
  if (X.size() < 2) throw std::invalid_argument("cost: trajectory needs at least two states");
  if (U.size() + 1 != X.size()) throw std::invalid_argument("cost: control sequence must have N-1 entries");
  const std::size_t m = X.front().size();
  if (player >= m) throw std::invalid_argument("cost: player index out of range");
  if (weights.collision_radii.size() != m) throw std::invalid_argument("cost: one collision radius per vehicle");
  for (const auto& x : X)
    if (x.size() != m) throw std::invalid_argument("cost: vehicle count changes along trajectory");
}

}  // namespace

void CostWeights::validate(std::size_t vehicle_count) const {
  if (!symmetric(state) || !symmetric(terminal) || !symmetric(control))
    throw std::invalid_argument("cost weights: matrices must be symmetric");
  if (min_eigenvalue(state) < -1e-12 || min_eigenvalue(terminal) < -1e-12)
    throw std::invalid_argument("cost weights: state weights must be positive semidefinite");
  if (min_eigenvalue(control) <= 0.0) throw std::invalid_argument("cost weights: control weight must be positive definite");
  if (!(activation_scale > 1.0)) throw std::invalid_argument("cost weights: activation scale must exceed 1");
  if (collision_radii.size() != vehicle_count)
    throw std::invalid_argument("cost weights: one collision radius per vehicle");
  for (double r : collision_radii)
    if (!(r > 0.0)) throw std::invalid_argument("cost weights: collision radii must be positive");
}

ThetaVector pack_theta(std::span<const ObjectiveParams> params) {
  ThetaVector theta(kParamsPerAgent * static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    theta(3 * i + 0) = params[i].desired_speed;
    theta(3 * i + 1) = params[i].desired_lane_y;
    theta(3 * i + 2) = params[i].aggressiveness;
  }
  return theta;
}

std::vector<ObjectiveParams> unpack_theta(const ThetaVector& theta) {
  if (theta.size() % kParamsPerAgent != 0) throw std::invalid_argument("theta: length must be a multiple of 3");
  std::vector<ObjectiveParams> out;
  out.reserve(theta.size() / kParamsPerAgent);
  for (Eigen::Index i = 0; i < theta.size(); i += kParamsPerAgent)
    out.push_back({theta(i), theta(i + 1), theta(i + 2)});
  return out;
}

std::vector<ObjectiveParams> expand_params(const ThetaVector& theta, const ObjectiveParams& robot,
                                           std::size_t robot_index) {
  auto agents = unpack_theta(theta);
  if (robot_index > agents.size()) throw std::invalid_argument("theta: robot index out of range");
  agents.insert(agents.begin() + static_cast<std::ptrdiff_t>(robot_index), robot);
  return agents;
}

Eigen::Vector4d desired_state(const ObjectiveParams& p) { return {0.0, p.desired_lane_y, 0.0, p.desired_speed}; }

double proximity_penalty(const Eigen::Vector2d& pa, const Eigen::Vector2d& pb, double activation, double gamma) {
  const double gap = std::max(0.0, activation - (pa - pb).norm());
  return gamma * gap * gap;
}

double evaluate_cost(const StateTrajectory& X, const ControlSequence& U, const ObjectiveParams& params,
                     const CostWeights& weights, std::size_t player) {
  check_shapes(X, U, weights, player);
  const std::size_t n = X.size();
  const std::size_t m = X.front().size();
  const Eigen::Vector4d xf = desired_state(params);
  const double gamma = std::max(0.0, params.aggressiveness);

  double cost = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector4d e = X[k][player].vector() - xf;
    if (k + 1 < n) {
      const Eigen::Vector2d u = U[k].vector();
      cost += 0.5 * e.dot(weights.state * e) + 0.5 * u.dot(weights.control * u);
    } else {
      cost += 0.5 * e.dot(weights.terminal * e);
    }
    const Eigen::Vector2d p{X[k][player].px, X[k][player].py};
    for (std::size_t other = 0; other < m; ++other) {
      if (other == player) continue;
      const Eigen::Vector2d q{X[k][other].px, X[k][other].py};
      cost += proximity_penalty(p, q, activation_distance(weights, player, other), gamma);
    }
  }
  return cost;
}

Eigen::VectorXd cost_features(const StateTrajectory& X, const ControlSequence& U, const CostWeights& weights,
                              std::size_t player) {
  check_shapes(X, U, weights, player);
  const std::size_t n = X.size();
  const std::size_t m = X.front().size();
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(kFeatureCount);
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector4d x = X[k][player].vector();
    const Eigen::Matrix4d& Q = (k + 1 < n) ? weights.state : weights.terminal;
    phi(0) += 0.5 * x.dot(Q * x);
    phi.segment<4>(1) -= Q * x;
    if (k + 1 < n) {
      const Eigen::Vector2d u = U[k].vector();
      phi(0) += 0.5 * u.dot(weights.control * u);
    }
    const Eigen::Vector2d p{X[k][player].px, X[k][player].py};
    for (std::size_t other = 0; other < m; ++other) {
      if (other == player) continue;
      const Eigen::Vector2d q{X[k][other].px, X[k][other].py};
      phi(6) += proximity_penalty(p, q, activation_distance(weights, player, other), 1.0);
    }
  }
  phi(5) = 1.0;
  return phi;
}

Eigen::VectorXd lifted_weights(const ObjectiveParams& params, const CostWeights& weights, std::size_t horizon) {
  const Eigen::Vector4d xf = desired_state(params);
  const Eigen::Matrix4d q_sum = static_cast<double>(horizon - 1) * weights.state + weights.terminal;
  Eigen::VectorXd theta(kFeatureCount);
  theta(0) = 1.0;
  theta.segment<4>(1) = xf;
  theta(5) = 0.5 * xf.dot(q_sum * xf);
  theta(6) = std::max(0.0, params.aggressiveness);
  return theta;
}

FeatureExpansion feature_expansion(const StateTrajectory& X, const ControlSequence& U,
                                   const ObjectiveParams& params, const CostWeights& weights, std::size_t player) {
  return {cost_features(X, U, weights, player), lifted_weights(params, weights, X.size())};
}

void stage_derivatives(const Eigen::VectorXd& x, const Eigen::Vector2d* control, std::size_t k,
                       std::size_t horizon, const ObjectiveParams& params, const CostWeights& weights,
                       std::size_t player, StageDerivatives& out) {
  const Eigen::Index dim = x.size();
  const std::size_t m = static_cast<std::size_t>(dim / kVehicleStateDim);
  out.value = 0.0;
  out.state_grad.setZero(dim);
  out.state_hess.setZero(dim, dim);
  out.control_grad.setZero();
  out.control_hess.setZero();

  const bool terminal = (k + 1 == horizon);
  const Eigen::Matrix4d& Q = terminal ? weights.terminal : weights.state;
  const Eigen::Index base = kVehicleStateDim * static_cast<Eigen::Index>(player);
  const Eigen::Vector4d e = x.segment<4>(base) - desired_state(params);
  out.value += 0.5 * e.dot(Q * e);
  out.state_grad.segment<4>(base) += Q * e;
  out.state_hess.block<4, 4>(base, base) += Q;
  if (!terminal && control != nullptr) {
    out.value += 0.5 * control->dot(weights.control * *control);
    out.control_grad = weights.control * *control;
    out.control_hess = weights.control;
  }

  const double gamma = std::max(0.0, params.aggressiveness);
  if (gamma == 0.0) return;
  const Eigen::Vector2d p = x.segment<2>(base);
  for (std::size_t other = 0; other < m; ++other) {
    if (other == player) continue;
    const Eigen::Index ob = kVehicleStateDim * static_cast<Eigen::Index>(other);
    const Eigen::Vector2d delta = p - x.segment<2>(ob);
    const double dist = delta.norm();
    const double gap = activation_distance(weights, player, other) - dist;
    if (gap <= 0.0 || dist < 1e-12) continue;
    const Eigen::Vector2d dir = delta / dist;
    out.value += gamma * gap * gap;
    const Eigen::Vector2d g = -2.0 * gamma * gap * dir;
    const Eigen::Matrix2d H = 2.0 * gamma *
                              (dir * dir.transpose() - gap / dist * (Eigen::Matrix2d::Identity() - dir * dir.transpose()));
    out.state_grad.segment<2>(base) += g;
    out.state_grad.segment<2>(ob) -= g;
    out.state_hess.block<2, 2>(base, base) += H;
    out.state_hess.block<2, 2>(ob, ob) += H;
    out.state_hess.block<2, 2>(base, ob) -= H;
    out.state_hess.block<2, 2>(ob, base) -= H;
  }
}

CostDerivatives cost_derivatives(const StateTrajectory& X, const ControlSequence& U,
                                 const ObjectiveParams& params, const CostWeights& weights, std::size_t player) {
  check_shapes(X, U, weights, player);
  const std::size_t n = X.size();
  CostDerivatives d;
  StageDerivatives stage;
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::VectorXd x = X[k].stacked();
    const Eigen::Vector2d u = (k + 1 < n) ? U[k].vector() : Eigen::Vector2d::Zero();
    stage_derivatives(x, k + 1 < n ? &u : nullptr, k, n, params, weights, player, stage);
    d.state_grad.push_back(stage.state_grad);
    d.state_hess.push_back(stage.state_hess);
    if (k + 1 < n) {
      d.control_grad.push_back(stage.control_grad);
      d.control_hess.push_back(stage.control_hess);
    }
  }
  return d;
}

}  // namespace lucid
