#pragma once

#include "lucid/game_solver.hpp"
#include "lucid/scene.hpp"

namespace lucid::testing {

inline CostWeights highway_weights(std::size_t m) {
  CostWeights w;
  w.state = Eigen::Vector4d(0.0, 0.5, 2.0, 1.0).asDiagonal();
  w.terminal = Eigen::Vector4d(0.0, 2.0, 4.0, 2.0).asDiagonal();
  w.control = Eigen::Vector2d(4.0, 1.0).asDiagonal();
  w.activation_scale = 2.5;
  w.collision_radii.assign(m, 1.0);
  return w;
}

/// Straight two-lane road (y in [0, 6]) with pairwise collision disks.
inline GameProblem highway_problem(const JointState& x0, const std::vector<ObjectiveParams>& params,
                                   std::size_t horizon = 21) {
  GameProblem g;
  g.horizon = horizon;
  g.dt = 0.15;
  g.robot = 0;
  g.x0 = x0;
  const std::size_t m = x0.size();
  for (std::size_t i = 0; i < m; ++i) g.players.push_back({params[i], highway_weights(m)});
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b) g.constraints.collisions.push_back({a, b, 2.0});
  for (std::size_t i = 0; i < m; ++i) {
    g.constraints.half_planes.push_back({i, {0.0, -1.0}, -1.0});  // y >= 0 + r
    g.constraints.half_planes.push_back({i, {0.0, 1.0}, 5.0});    // y <= 6 - r
  }
  return g;
}

/// The same road as a Scene; the robot is vehicle 0.
inline Scene highway_scene(std::size_t m, ObjectiveParams robot_params) {
  const JointState dummy{std::vector<VehicleState>(m)};
  const GameProblem g = highway_problem(dummy, std::vector<ObjectiveParams>(m));
  Scene s;
  s.robot = 0;
  s.robot_params = robot_params;
  for (const auto& p : g.players) s.weights.push_back(p.weights);
  s.constraints = g.constraints;
  return s;
}

}  // namespace lucid::testing
