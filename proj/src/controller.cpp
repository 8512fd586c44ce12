#include "lucid/controller.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace lucid {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<ObjectiveParams> true_params(const WorldConfig& world) {
  return expand_params(world.theta_true, world.scene.robot_params, world.scene.robot);
}

std::vector<double> ellipse_radii(const Scene& scene) {
  const auto& r = scene.weights.at(scene.robot).collision_radii;
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = r[scene.robot] + r[i];
  return out;
}

OpenLoopSolution solve_warm(const GameProblem& g, const SolverOptions& o, const OpenLoopSolution* previous) {
  if (previous == nullptr || previous->U.empty()) return solve(g, o);
  const OpenLoopSolution warm = shift_plan(*previous);
  return solve(g, o, &warm);
}

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

nlohmann::json tracks_json(const PositionTracks& t) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& track : t) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : track) a.push_back({p.x(), p.y()});
    j.push_back(std::move(a));
  }
  return j;
}

void propagate(const JointState& x, const WorldConfig& world, std::mt19937_64& rng, StepOutcome& out) {
  out.noiseless = joint_step(x, out.applied, world.scene.dt);
  out.next = out.noiseless;
  if (world.state_noise_std > 0.0) {
    std::normal_distribution<double> g(0.0, world.state_noise_std);
    for (auto& v : out.next.vehicles) {
      v.px += g(rng);
      v.py += g(rng);
      v.heading += g(rng);
      v.speed += g(rng);
    }
  }
}

}  // namespace

void WorldConfig::validate() const {
  const std::size_t m = scene.num_vehicles();
  if (m < 2) throw std::invalid_argument("world: need at least two vehicles");
  if (x0.size() != m) throw std::invalid_argument("world: initial state has wrong vehicle count");
  if (theta_true.size() != static_cast<Eigen::Index>(kParamsPerAgent * (m - 1)))
    throw std::invalid_argument("world: theta has wrong length");
  if (steps < 2) throw std::invalid_argument("world: need at least two steps");
  if (!(state_noise_std >= 0.0) || !(belief_noise_fraction >= 0.0))
    throw std::invalid_argument("world: noise levels must be non-negative");
  if (estimator_period < 1) throw std::invalid_argument("world: estimator period must be at least 1");
  ukf.validate(static_cast<std::size_t>(theta_true.size()), 4 * m);
}

std::vector<std::vector<ObjectiveParams>> ideal_agent_views(const WorldConfig& world, std::mt19937_64& rng) {
  const auto truth = true_params(world);
  std::vector<std::vector<ObjectiveParams>> views(truth.size(), truth);
  if (!(world.belief_noise_fraction > 0.0)) return views;
  std::normal_distribution<double> g;
  const double f = world.belief_noise_fraction;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (i == world.scene.robot) continue;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (j == i) continue;
      ObjectiveParams& p = views[i][j];
      p.desired_speed += f * std::abs(p.desired_speed) * g(rng);
      p.desired_lane_y += f * std::abs(p.desired_lane_y) * g(rng);
      p.aggressiveness += f * std::abs(p.aggressiveness) * g(rng);
    }
  }
  return views;
}

StepOutcome controller_step(const JointState& x, const ThetaVector& mu, const WorldConfig& world,
                            const std::vector<std::vector<ObjectiveParams>>& views, std::mt19937_64& rng,
                            const std::vector<SafetyEllipse>* ellipses, const StepOutcome* previous) {
  const Scene& scene = world.scene;
  const std::size_t m = scene.num_vehicles();
  if (views.size() != m) throw std::invalid_argument("controller: one view per vehicle");
  StepOutcome out;

  GameProblem robot_game = scene.problem(x, mu);
  if (ellipses != nullptr) robot_game.constraints.ellipses = *ellipses;
  const auto start = Clock::now();
  out.robot_plan = solve_warm(robot_game, scene.options, previous ? &previous->robot_plan : nullptr);
  out.robot_ms = ms_since(start);
  out.converged = out.robot_plan.converged;

  out.agent_plans.resize(m);
  out.applied.controls.resize(m);
  out.applied.controls[scene.robot] = out.robot_plan.U[scene.robot][0];
  for (std::size_t i = 0; i < m; ++i) {
    if (i == scene.robot) continue;
    const OpenLoopSolution* warm = previous && previous->agent_plans.size() == m ? &previous->agent_plans[i] : nullptr;
    out.agent_plans[i] = solve_warm(scene.problem(x, views[i]), scene.options, warm);
    out.applied.controls[i] = out.agent_plans[i].U[i][0];
    out.converged = out.converged && out.agent_plans[i].converged;
  }

  propagate(x, world, rng, out);
  return out;
}

PositionTracks position_tracks(const StateTrajectory& X) {
  PositionTracks t;
  if (X.empty()) return t;
  t.resize(X.front().size());
  for (const auto& x : X)
    for (std::size_t i = 0; i < x.size(); ++i) t[i].push_back({x[i].px, x[i].py});
  return t;
}

RunLog lucidgames_loop(const WorldConfig& world, const Belief& prior, const LoopOptions& options) {
  world.validate();
  const Scene& scene = world.scene;
  if (prior.mean.size() != world.theta_true.size()) throw std::invalid_argument("loop: prior has wrong dimension");

  std::mt19937_64 rng(world.seed);
  const auto views = ideal_agent_views(world, rng);
  const auto radii = ellipse_radii(scene);

  RunLog log;
  log.steps.reserve(world.steps);
  Belief belief = prior;
  ThetaVector mu_prev = prior.mean;
  JointState x = world.x0;
  JointState x_prev = x;
  StepOutcome last;
  bool acted = false;
  std::vector<SafetyEllipse> ellipses;
  OpenLoopSolution oracle_prev, prior_prev;

  for (std::size_t t = 0; t < world.steps; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.time = static_cast<double>(t) * scene.dt;
    rec.state = x;
    rec.belief = belief;

    // Estimator: transition (x_{t-1}, x_t) gives the belief for t+1.
    const auto est_start = Clock::now();
    EstimatorResult est;
    rec.estimator_ran = acted && t % world.estimator_period == 0;
    if (rec.estimator_ran) {
      try {
        est = estimator_update(x_prev, x, mu_prev, belief, scene, world.ukf, last.applied[scene.robot],
                               &last.robot_plan, world.workers);
        rec.sigma_unconverged = est.unconverged;
        rec.update = est.diagnostics;
      } catch (const std::exception& e) {
        rec.error = std::string("estimator: ") + e.what();
        rec.estimator_ran = false;
      }
    }
    if (options.safety_on) {
      if (t == 0) {
        const SigmaPointSet sigma = sigma_points(prior.mean, prior.cov, world.ukf);
        const auto plans = sigma_plans(sigma, x, scene, nullptr, world.workers);
        ellipses = fit_safety_ellipses(plans, sigma.mean_weights, scene.robot, radii, world.safety, 0);
      } else if (rec.estimator_ran) {
        // Sigma plans start at x_{t-1}; shift them one step onto the robot's horizon.
        ellipses = fit_safety_ellipses(est.plans, est.sigma.mean_weights, scene.robot, radii, world.safety, 1);
      }
      rec.ellipses = ellipses;
    }
    rec.estimator_ms = ms_since(est_start);

    StepOutcome out;
    bool planned = false;
    if (t + 1 < world.steps) {
      try {
        out = controller_step(x, belief.mean, world, views, rng, options.safety_on ? &ellipses : nullptr,
                              acted ? &last : nullptr);
        planned = true;
      } catch (const std::exception& e) {
        // Everyone coasts for one step; the next solve starts cold.
        rec.error = std::string("controller: ") + e.what();
        out = StepOutcome{};
        out.applied.controls.assign(scene.num_vehicles(), VehicleControl{});
        out.converged = false;
        propagate(x, world, rng, out);
      }
      rec.planner_ms = out.robot_ms;
      rec.robot_converged = rec.agents_converged = false;
    }
    if (planned) {
      rec.robot_plan = position_tracks(out.robot_plan.X);
      rec.agent_plans.resize(scene.num_vehicles());
      for (std::size_t i = 0; i < scene.num_vehicles(); ++i) {
        if (i == scene.robot) continue;
        rec.agent_plans[i] = position_tracks(out.agent_plans[i].X)[i];
      }
      rec.robot_converged = out.robot_plan.converged;
      for (const auto& e : rec.ellipses) {
        const auto& s = out.robot_plan.X[e.step][scene.robot];
        rec.safety_value = std::max(rec.safety_value, safety_constraint_value({s.px, s.py}, e));
      }
      rec.agents_converged = true;
      for (std::size_t i = 0; i < scene.num_vehicles(); ++i)
        if (i != scene.robot) rec.agents_converged = rec.agents_converged && out.agent_plans[i].converged;
    }
    auto predict = [&](const char* what, const ThetaVector& theta, OpenLoopSolution& prev, PositionTracks& slot) {
      try {
        prev = solve_warm(scene.problem(x, theta), scene.options, &prev);
        slot = position_tracks(prev.X);
      } catch (const std::exception& e) {
        prev = OpenLoopSolution{};
        if (rec.error.empty()) rec.error = std::string(what) + ": " + e.what();
      }
    };
    if (options.predict_oracle) predict("oracle", world.theta_true, oracle_prev, rec.oracle_plan);
    if (options.predict_prior) predict("prior", prior.mean, prior_prev, rec.prior_plan);
    log.steps.push_back(std::move(rec));

    mu_prev = belief.mean;
    if (log.steps.back().estimator_ran) belief = est.belief;
    if (t + 1 < world.steps) {
      x_prev = x;
      x = out.next;
      last = std::move(out);
      acted = true;
    }
  }
  return log;
}

nlohmann::json to_json(const StepRecord& r, bool with_timing) {
  nlohmann::json j;
  j["t"] = r.t;
  j["time"] = r.time;
  nlohmann::json state = nlohmann::json::array();
  for (const auto& v : r.state.vehicles) state.push_back({v.px, v.py, v.heading, v.speed});
  j["state"] = std::move(state);
  j["mean"] = vec_json(r.belief.mean);
  nlohmann::json cov = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.belief.cov.rows(); ++i) cov.push_back(vec_json(r.belief.cov.row(i).transpose()));
  j["cov"] = std::move(cov);
  j["robot_plan"] = tracks_json(r.robot_plan);
  j["agent_plans"] = tracks_json(r.agent_plans);
  if (!r.oracle_plan.empty()) j["oracle_plan"] = tracks_json(r.oracle_plan);
  if (!r.prior_plan.empty()) j["prior_plan"] = tracks_json(r.prior_plan);
  nlohmann::json ellipses = nlohmann::json::array();
  for (const auto& e : r.ellipses)
    ellipses.push_back({{"agent", e.agent},
                        {"step", e.step},
                        {"center", {e.center.x(), e.center.y()}},
                        {"shape", {e.shape(0, 0), e.shape(0, 1), e.shape(1, 1)}}});
  j["ellipses"] = std::move(ellipses);
  if (std::isfinite(r.safety_value)) j["safety_value"] = r.safety_value;
  j["robot_converged"] = r.robot_converged;
  j["agents_converged"] = r.agents_converged;
  j["estimator_ran"] = r.estimator_ran;
  j["sigma_unconverged"] = r.sigma_unconverged;
  j["innovation_norm"] = r.update.innovation_norm;
  j["trace"] = r.update.trace;
  j["update_regularized"] = r.update.regularized;
  j["update_skipped"] = r.update.skipped;
  if (!r.error.empty()) j["error"] = r.error;
  if (with_timing) {
    j["planner_ms"] = r.planner_ms;
    j["estimator_ms"] = r.estimator_ms;
  }
  return j;
}

void write_jsonl(std::ostream& os, const nlohmann::json& header, const RunLog& log, bool with_timing) {
  os << header.dump() << '\n';
  for (const auto& r : log.steps) os << to_json(r, with_timing).dump() << '\n';
}

}  // namespace lucid
