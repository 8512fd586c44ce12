#include "lucid/scene.hpp"

#include <stdexcept>

namespace lucid {

GameProblem Scene::problem(const JointState& x0, const std::vector<ObjectiveParams>& params) const {
  if (params.size() != weights.size()) throw std::invalid_argument("scene: one objective per vehicle");
  if (x0.size() != weights.size()) throw std::invalid_argument("scene: state has wrong vehicle count");
  GameProblem g;
  g.horizon = horizon;
  g.dt = dt;
  g.robot = robot;
  g.x0 = x0;
  g.constraints = constraints;
  g.constraints.robot = robot;
  g.players.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g.players.push_back({params[i], weights[i]});
  return g;
}

GameProblem Scene::problem(const JointState& x0, const ThetaVector& theta) const {
  return problem(x0, expand_params(theta, robot_params, robot));
}

}  // namespace lucid
