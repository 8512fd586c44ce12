#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "lucid/game_solver.hpp"
#include "lucid/safety.hpp"
#include "lucid/scene.hpp"
#include "lucid/ukf.hpp"

namespace lucid {

/// A simulated world: the scene, the true objectives of the ideal agents and
/// everything needed to reproduce a run.
struct WorldConfig {
  Scene scene;
  JointState x0;
  ThetaVector theta_true;
  double state_noise_std = 0.01;       // additive, every state component, after each step
  double belief_noise_fraction = 0.1;  // ideal agents' error on others' params, relative std
  std::size_t steps = 2;               // T
  std::uint64_t seed = 0;
  UkfConfig ukf;
  SafetyOptions safety;
  std::size_t estimator_period = 1;  // update the belief every k-th step
  std::size_t workers = 1;           // threads for the sigma-point solves

  void validate() const;
};

/// What each vehicle believes about everyone's params. views[i][j] is vehicle
/// i's copy of vehicle j's objective; views[i][i] is exact. The robot's row is
/// unused. Draws from rng only when belief_noise_fraction > 0.
std::vector<std::vector<ObjectiveParams>> ideal_agent_views(const WorldConfig& world, std::mt19937_64& rng);

struct StepOutcome {
  JointState next;       // with injected noise
  JointState noiseless;  // joint_step of the applied controls
  JointControl applied;
  OpenLoopSolution robot_plan;
  std::vector<OpenLoopSolution> agent_plans;  // per vehicle; the robot slot is empty
  bool converged = true;
  double robot_ms = 0.0;  // wall time of the robot's solve
};

/// One step of simultaneous planning and acting. The robot plans with theta
/// estimate `mu`, plus `ellipses` when given; each ideal agent plans with its
/// own view. First controls are applied and noise is added.
StepOutcome controller_step(const JointState& x, const ThetaVector& mu, const WorldConfig& world,
                            const std::vector<std::vector<ObjectiveParams>>& views, std::mt19937_64& rng,
                            const std::vector<SafetyEllipse>* ellipses = nullptr,
                            const StepOutcome* previous = nullptr);

/// Positions per vehicle along a plan, [vehicle][k].
using PositionTracks = std::vector<std::vector<Eigen::Vector2d>>;
PositionTracks position_tracks(const StateTrajectory& X);

struct StepRecord {
  std::size_t t = 0;
  double time = 0.0;
  JointState state;
  Belief belief;
  PositionTracks robot_plan;    // the robot's plan, including its predictions of the agents
  PositionTracks agent_plans;   // each ideal agent's own planned track (robot slot empty)
  PositionTracks oracle_plan;   // game with the true theta, when requested
  PositionTracks prior_plan;    // game with the prior mean, when requested
  std::vector<SafetyEllipse> ellipses;  // constraints the robot planned with at t
  double safety_value = -std::numeric_limits<double>::infinity();  // worst ellipse value along the robot plan
  bool robot_converged = true;
  bool agents_converged = true;
  bool estimator_ran = false;
  std::size_t sigma_unconverged = 0;
  UpdateDiagnostics update;
  std::string error;  // empty unless a solve or update threw at this step
  double planner_ms = 0.0;    // robot's game solve
  double estimator_ms = 0.0;  // belief update and ellipse fit
};

struct RunLog {
  std::vector<StepRecord> steps;
};

struct LoopOptions {
  bool safety_on = false;
  bool predict_oracle = false;
  bool predict_prior = false;
};

/// Receding-horizon estimation and planning for world.steps steps. At step t
/// the belief is first updated from the transition (x_{t-1}, x_t), then the
/// robot plans and acts with it. Step 0 uses the prior.
RunLog lucidgames_loop(const WorldConfig& world, const Belief& prior, const LoopOptions& options = {});

nlohmann::json to_json(const StepRecord& r, bool with_timing = true);
/// One header line, then one line per step.
void write_jsonl(std::ostream& os, const nlohmann::json& header, const RunLog& log, bool with_timing = true);

}  // namespace lucid
