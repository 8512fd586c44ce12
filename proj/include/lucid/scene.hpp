#pragma once

#include <cstddef>
#include <vector>

#include "lucid/game_solver.hpp"
#include "lucid/objectives.hpp"

namespace lucid {

/// Everything about a driving scene except who wants what: weights, radii,
/// road geometry and solver settings. Combined with per-vehicle objective
/// parameters it yields a GameProblem.
struct Scene {
  std::size_t robot = 0;
  std::size_t horizon = 21;
  double dt = 0.15;
  ObjectiveParams robot_params;
  std::vector<CostWeights> weights;  // one per vehicle
  ConstraintSet constraints;         // shared; ellipses are added per solve
  SolverOptions options;

  std::size_t num_vehicles() const { return weights.size(); }

  GameProblem problem(const JointState& x0, const std::vector<ObjectiveParams>& params) const;
  /// Robot params from the scene, everyone else from theta.
  GameProblem problem(const JointState& x0, const ThetaVector& theta) const;
};

}  // namespace lucid
