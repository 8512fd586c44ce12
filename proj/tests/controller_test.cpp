#include "lucid/controller.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/vehicle_fixtures.hpp"

namespace lucid {
namespace {

using testing::highway_scene;

// Two vehicles cruising on separate lanes, far apart.
WorldConfig cruise_world(std::size_t steps) {
  WorldConfig w;
  w.scene = highway_scene(2, {12.0, 1.5, 1.0});
  w.scene.options.tol_stationarity = 1e-4;
  w.scene.options.tol_feasibility = 1e-4;
  w.x0 = JointState{{{0, 1.5, 0, 11}, {15, 4.5, 0, 10}}};
  w.theta_true = pack_theta(std::vector<ObjectiveParams>{{11.0, 4.5, 2.0}});
  w.steps = steps;
  w.seed = 3;
  w.ukf = UkfConfig::isotropic(3, 8);
  return w;
}

// Both vehicles at rest on their own lane centers, wanting zero speed.
WorldConfig resting_world() {
  WorldConfig w;
  w.scene = highway_scene(2, {0.0, 1.5, 1.0});
  w.x0 = JointState{{{0, 1.5, 0, 0}, {20, 4.5, 0, 0}}};
  w.theta_true = pack_theta(std::vector<ObjectiveParams>{{0.0, 4.5, 1.0}});
  w.state_noise_std = 0.0;
  w.belief_noise_fraction = 0.0;
  w.ukf = UkfConfig::isotropic(3, 8);
  return w;
}

Belief tight_prior(const ThetaVector& mean, double var) {
  return {mean, var * Eigen::MatrixXd::Identity(mean.size(), mean.size())};
}

TEST(ControllerStep, RestingEquilibriumStaysPut) {
  const WorldConfig w = resting_world();
  std::mt19937_64 rng(1);
  const auto views = ideal_agent_views(w, rng);
  JointState x = w.x0;
  for (int t = 0; t < 3; ++t) {
    const StepOutcome out = controller_step(x, w.theta_true, w, views, rng);
    EXPECT_EQ(out.next, x);
    x = out.next;
  }
}

TEST(ControllerStep, OracleBeliefPredictsExecutedControls) {
  WorldConfig w = cruise_world(2);
  w.belief_noise_fraction = 0.0;
  w.x0 = JointState{{{0, 1.5, 0, 11}, {6, 4.5, 0, 13}}};
  std::mt19937_64 rng(1);
  const auto views = ideal_agent_views(w, rng);
  const StepOutcome out = controller_step(w.x0, w.theta_true, w, views, rng);
  ASSERT_TRUE(out.converged);
  EXPECT_EQ(out.robot_plan.U[1][0], out.applied[1]);
  EXPECT_EQ(out.robot_plan.U[1], out.agent_plans[1].U[1]);
}

TEST(ControllerStep, ExecutesFirstPlannedControlsPlusNoise) {
  const WorldConfig w = cruise_world(2);
  std::mt19937_64 rng(2);
  const auto views = ideal_agent_views(w, rng);
  const StepOutcome out = controller_step(w.x0, w.theta_true, w, views, rng);
  EXPECT_EQ(out.applied[0], out.robot_plan.U[0][0]);
  EXPECT_EQ(out.applied[1], out.agent_plans[1].U[1][0]);
  EXPECT_EQ(out.noiseless, joint_step(w.x0, out.applied, w.scene.dt));
  EXPECT_GT((out.next.stacked() - out.noiseless.stacked()).norm(), 0.0);
}

TEST(ControllerStep, InjectedNoiseHasRequestedDistribution) {
  WorldConfig w = resting_world();
  w.state_noise_std = 0.01;
  std::mt19937_64 rng(9);
  const auto views = ideal_agent_views(w, rng);
  std::vector<double> samples;
  const StepOutcome* previous = nullptr;
  StepOutcome last;
  for (int t = 0; t < 1000; ++t) {
    StepOutcome out = controller_step(w.x0, w.theta_true, w, views, rng, nullptr, previous);
    const Eigen::VectorXd d = out.next.stacked() - out.noiseless.stacked();
    for (Eigen::Index i = 0; i < d.size(); ++i) samples.push_back(d(i));
    last = std::move(out);
    previous = &last;
  }
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double var = 0.0;
  std::size_t within = 0;
  for (double s : samples) {
    var += (s - mean) * (s - mean);
    if (std::abs(s) <= 0.01) ++within;
  }
  var /= n - 1.0;
  EXPECT_LT(std::abs(mean), 4.0 * 0.01 / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(var), 0.01, 0.01 * 4.0 / std::sqrt(2.0 * n));
  EXPECT_NEAR(static_cast<double>(within) / n, 0.6827, 4.0 * std::sqrt(0.6827 * 0.3173 / n));
}

TEST(ControllerStep, IdealAgentViewsPerturbOthersOnly) {
  const WorldConfig w = cruise_world(2);
  std::mt19937_64 rng(4);
  const auto views = ideal_agent_views(w, rng);
  ASSERT_EQ(views.size(), 2u);
  EXPECT_EQ(views[0][0].desired_speed, 12.0);
  EXPECT_EQ(views[1][1].desired_speed, 11.0);
  EXPECT_NE(views[1][0].desired_speed, 12.0);
}

TEST(Loop, TwoStepsGiveOnePlanAndOneUpdate) {
  const WorldConfig w = cruise_world(2);
  const RunLog log = lucidgames_loop(w, tight_prior(Eigen::Vector3d(10, 4, 1.5), 1.0));
  ASSERT_EQ(log.steps.size(), 2u);
  EXPECT_FALSE(log.steps[0].robot_plan.empty());
  EXPECT_TRUE(log.steps[1].robot_plan.empty());
  EXPECT_FALSE(log.steps[0].estimator_ran);
  EXPECT_TRUE(log.steps[1].estimator_ran);
  EXPECT_EQ(log.steps[1].belief.mean, Eigen::Vector3d(10, 4, 1.5));
}

TEST(Loop, IsReproducible) {
  const WorldConfig w = cruise_world(5);
  const Belief prior = tight_prior(Eigen::Vector3d(10, 4, 1.5), 4.0);
  const RunLog a = lucidgames_loop(w, prior, {true, true, true});
  const RunLog b = lucidgames_loop(w, prior, {true, true, true});
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t t = 0; t < a.steps.size(); ++t) EXPECT_EQ(to_json(a.steps[t], false), to_json(b.steps[t], false));
}

TEST(Loop, BeliefNeverDependsOnFutureStates) {
  WorldConfig w = cruise_world(6);
  const Belief prior = tight_prior(Eigen::Vector3d(10, 4, 1.5), 4.0);
  const RunLog longer = lucidgames_loop(w, prior);
  w.steps = 4;
  const RunLog shorter = lucidgames_loop(w, prior);
  for (std::size_t t = 0; t < shorter.steps.size(); ++t) {
    EXPECT_EQ(shorter.steps[t].state, longer.steps[t].state);
    EXPECT_EQ(shorter.steps[t].belief.mean, longer.steps[t].belief.mean);
    EXPECT_EQ(shorter.steps[t].belief.cov, longer.steps[t].belief.cov);
  }
}

TEST(Loop, TrueMeanWithTinySpreadTracksOracle) {
  WorldConfig w = cruise_world(5);
  w.belief_noise_fraction = 0.0;
  w.x0 = JointState{{{0, 1.5, 0, 11}, {6, 4.5, 0, 13}}};
  const RunLog log = lucidgames_loop(w, tight_prior(w.theta_true, 1e-8), {false, true, false});
  for (std::size_t t = 0; t + 1 < log.steps.size(); ++t) {
    const auto& r = log.steps[t];
    ASSERT_EQ(r.robot_plan.size(), r.oracle_plan.size());
    for (std::size_t k = 0; k < r.robot_plan[1].size(); ++k)
      EXPECT_LT((r.robot_plan[1][k] - r.oracle_plan[1][k]).norm(), 0.05) << "t " << t << " k " << k;
  }
}

TEST(Loop, SafetyConstraintsAreLoggedAndRespected) {
  const WorldConfig w = cruise_world(3);
  const RunLog log = lucidgames_loop(w, tight_prior(Eigen::Vector3d(10, 4, 1.5), 1.0), {true, false, false});
  for (std::size_t t = 0; t + 1 < log.steps.size(); ++t) {
    const auto& r = log.steps[t];
    EXPECT_EQ(r.ellipses.size(), w.scene.horizon - 1);
    if (r.robot_converged) EXPECT_LE(r.safety_value, w.scene.options.tol_feasibility);
  }
}

TEST(Loop, JsonlHasHeaderAndOneLinePerStep) {
  const WorldConfig w = cruise_world(3);
  const RunLog log = lucidgames_loop(w, tight_prior(Eigen::Vector3d(10, 4, 1.5), 1.0));
  std::ostringstream os;
  write_jsonl(os, {{"type", "header"}}, log);
  std::istringstream in(os.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (lines > 0) {
      EXPECT_EQ(j.at("t"), lines - 1);
      EXPECT_TRUE(j.contains("planner_ms"));
    }
    ++lines;
  }
  EXPECT_EQ(lines, 4u);
}

TEST(WorldConfig, ValidationRejectsMalformedWorlds) {
  WorldConfig w = cruise_world(1);
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w.steps = 2;
  w.theta_true = Eigen::VectorXd::Ones(4);
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace lucid
