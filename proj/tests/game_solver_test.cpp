#include "lucid/game_solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/lq_game.hpp"
#include "support/vehicle_fixtures.hpp"

namespace lucid {
namespace {

using testing::highway_problem;
using testing::LqGame;
using testing::random_lq_game;
using testing::stacked_kkt_oracle;

SolverOptions tight() {
  SolverOptions o;
  o.tol_stationarity = 1e-10;
  o.tol_feasibility = 1e-8;
  return o;
}

TEST(SolveGame, SinglePlayerAtRestOnTargetStaysPut) {
  GameProblem g;
  g.horizon = 11;
  g.x0 = JointState{{{0, 1.5, 0, 0}}};
  g.players.push_back({{0.0, 1.5, 1.0}, testing::highway_weights(1)});
  const auto sol = solve(g);
  EXPECT_TRUE(sol.converged);
  EXPECT_LE(sol.stationarity, 1e-8);
  for (const auto& c : sol.U[0]) {
    EXPECT_EQ(c.yaw_rate, 0.0);
    EXPECT_EQ(c.accel, 0.0);
  }
}

TEST(SolveGame, MatchesStackedKktOracleOnLqGames) {
  std::mt19937_64 rng(2024);
  for (int seed = 0; seed < 20; ++seed) {
    const std::size_t horizon = 3 + seed % 8;
    const LqGame game(random_lq_game(rng, horizon));
    const Eigen::VectorXd oracle = stacked_kkt_oracle(game.data());
    const GameSolution sol = solve_game(game, tight());
    ASSERT_TRUE(sol.converged) << "seed " << seed;
    EXPECT_LT((sol.controls - oracle).lpNorm<Eigen::Infinity>(), 1e-6) << "seed " << seed;
    EXPECT_LT(nash_residual(game, oracle, Eigen::VectorXd()), 1e-10) << "seed " << seed;
  }
}

TEST(SolveGame, UnilateralDeviationIncreasesCost) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g;
  const LqGame game(random_lq_game(rng, 8));
  const GameSolution sol = solve_game(game, tight());
  ASSERT_TRUE(sol.converged);
  const Eigen::Index block = 2 * 7;
  for (std::size_t p = 0; p < 2; ++p) {
    const double base = game.player_cost(p, sol.controls);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd delta = Eigen::VectorXd::Zero(sol.controls.size());
      for (Eigen::Index i = 0; i < block; ++i) delta(static_cast<Eigen::Index>(p) * block + i) = g(rng);
      delta *= 1e-2 / delta.norm();
      EXPECT_GT(game.player_cost(p, sol.controls + delta), base);
    }
  }
}

TEST(SolveGame, HeadOnVehiclesKeepCollisionDistance) {
  const JointState x0{{{0, 2.9, 0, 10}, {30, 3.1, M_PI, 10}}};
  auto g = highway_problem(x0, {{10, 2.9, 1.0}, {10, 3.1, 1.0}});
  for (auto& p : g.players) {
    p.weights.state(2, 2) = 0.0;
    p.weights.terminal(2, 2) = 0.0;
  }
  const auto sol = solve(g, SolverOptions{});
  ASSERT_TRUE(sol.converged) << sol.stationarity << " " << sol.violation;
  for (const auto& x : sol.X) EXPECT_GE(std::hypot(x[0].px - x[1].px, x[0].py - x[1].py), 2.0 - 1e-3);
}

TEST(SolveGame, MergingTrafficIsFeasibleAndDynamicallyConsistent) {
  const JointState x0{{{0, 1.5, 0, 12}, {6, 4.5, 0, 10}, {-8, 4.5, 0, 14}}};
  const auto g = highway_problem(x0, {{14, 1.5, 1.0}, {11, 1.5, 2.0}, {15, 4.5, 3.0}});
  const auto sol = solve(g);
  ASSERT_TRUE(sol.converged) << sol.stationarity << " " << sol.violation;
  EXPECT_LE(sol.violation, 1e-6);
  EXPECT_LE(max_violation(evaluate_constraints(sol.X, g.constraints)), 1e-6);
  const auto replay = rollout(g.x0, sol.U, g.dt);
  for (std::size_t k = 0; k < replay.size(); ++k)
    EXPECT_LT((replay[k].stacked() - sol.X[k].stacked()).lpNorm<Eigen::Infinity>(), 1e-10);
  EXPECT_LE(nash_residual(sol, g), 1e-6);
}

TEST(SolveGame, StationarityJacobianMatchesFiniteDifferences) {
  const JointState x0{{{0, 1.5, 0, 12}, {6, 4.5, 0, 10}, {-8, 4.5, 0, 14}}};
  const auto g = highway_problem(x0, {{14, 1.5, 1.0}, {11, 1.5, 2.0}, {15, 4.5, 3.0}});
  const VehicleGame game(g);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n;
  const Eigen::Index dim = 3 * 2 * 20;
  Eigen::VectorXd U(dim);
  for (Eigen::Index i = 0; i < dim; ++i) U(i) = 0.3 * n(rng);
  std::vector<ConstraintValue> probe;
  for (std::size_t k = 1; k < 21; ++k) game.constraints(k, game.initial_state(), probe);
  Eigen::VectorXd lambda(static_cast<Eigen::Index>(probe.size()));
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda(i) = std::abs(n(rng));
  const Eigen::MatrixXd J = stationarity_jacobian(game, U, lambda);
  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < dim; ++i) {
    Eigen::VectorXd up = U, um = U;
    up(i) += eps;
    um(i) -= eps;
    const Eigen::VectorXd fd = (stationarity_vector(game, up, lambda) - stationarity_vector(game, um, lambda)) / (2 * eps);
    EXPECT_LT((fd - J.col(i)).lpNorm<Eigen::Infinity>(), 1e-5 * std::max(1.0, fd.lpNorm<Eigen::Infinity>())) << i;
  }
}

TEST(SolveGame, IsDeterministic) {
  const JointState x0{{{0, 1.5, 0, 12}, {6, 4.5, 0, 10}}};
  const auto g = highway_problem(x0, {{14, 4.5, 1.0}, {11, 1.5, 2.0}});
  const auto a = solve(g);
  const auto b = solve(g);
  EXPECT_EQ(a.stacked_controls(), b.stacked_controls());
  EXPECT_EQ(a.multipliers, b.multipliers);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(SolveGame, WarmStartAtSolutionNeedsNoNewtonSteps) {
  const JointState x0{{{0, 1.5, 0, 12}, {15, 4.5, 0, 10}}};
  const auto g = highway_problem(x0, {{14, 1.5, 1.0}, {11, 4.5, 2.0}});
  SolverOptions o;
  o.tol_stationarity = 1e-8;
  const auto cold = solve(g, o);
  ASSERT_TRUE(cold.converged);
  const auto warm = solve(g, o, &cold);
  EXPECT_TRUE(warm.converged);
  EXPECT_LT(warm.iterations, cold.iterations);
}

TEST(SolveGame, ShiftPlanDropsFirstControl) {
  const JointState x0{{{0, 1.5, 0, 12}, {15, 4.5, 0, 10}}};
  const auto g = highway_problem(x0, {{14, 1.5, 1.0}, {11, 4.5, 2.0}});
  const auto sol = solve(g);
  const auto shifted = shift_plan(sol);
  for (std::size_t p = 0; p < 2; ++p) {
    EXPECT_EQ(shifted.U[p][0], sol.U[p][1]);
    EXPECT_EQ(shifted.U[p].back(), sol.U[p].back());
  }
}

TEST(Constraints, CollisionBoundaryIsZero) {
  ConstraintSet set;
  set.collisions.push_back({0, 1, 2.0});
  const JointState x{{{0, 0, 0, 0}, {2.0, 0, 0, 0}}};
  std::vector<ConstraintValue> out;
  evaluate_constraints_at(x.stacked(), 1, set, out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].value, 0.0);
  EXPECT_EQ(out[0].players, 3u);
}

TEST(Constraints, RoadCenterIsStrictlyInside) {
  const auto g = highway_problem(JointState{{{0, 3.0, 0, 10}, {20, 3.0, 0, 10}}}, {{}, {}});
  std::vector<ConstraintValue> out;
  ConstraintSet planes;
  planes.half_planes = g.constraints.half_planes;
  evaluate_constraints_at(g.x0.stacked(), 1, planes, out);
  for (const auto& c : out) EXPECT_LT(c.value, 0.0);
}

TEST(Constraints, GradientsMatchFiniteDifferences) {
  ConstraintSet set;
  set.collisions.push_back({0, 1, 2.0});
  set.half_planes.push_back({1, Eigen::Vector2d(0.3, -0.9).normalized(), 0.5});
  set.obstacles.push_back({0, {5.0, 1.0}, 3.0});
  set.ramps.push_back({1, 0.0, 40.0, -3.0, 0.0, 1.0});
  set.ellipses.push_back({1, 1, {2.0, 2.0}, (Eigen::Matrix2d() << 4.0, 0.5, 0.5, 2.0).finished()});
  set.robot = 0;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-10, 30);
  const double eps = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x(8);
    for (int i = 0; i < 8; ++i) x(i) = u(rng);
    std::vector<ConstraintValue> base;
    evaluate_constraints_at(x, 1, set, base);
    ASSERT_EQ(base.size(), 5u);
    for (std::size_t c = 0; c < base.size(); ++c) {
      for (int a = 0; a < base[c].count; ++a) {
        Eigen::VectorXd xp = x, xm = x;
        xp(base[c].index[a]) += eps;
        xm(base[c].index[a]) -= eps;
        std::vector<ConstraintValue> vp, vm;
        evaluate_constraints_at(xp, 1, set, vp);
        evaluate_constraints_at(xm, 1, set, vm);
        const double fd = (vp[c].value - vm[c].value) / (2 * eps);
        EXPECT_NEAR(base[c].grad(a), fd, 1e-6 * std::max(1.0, std::abs(fd))) << "constraint " << c;
      }
    }
  }
}

TEST(Constraints, EllipsesOnlyApplyAtTheirStep) {
  ConstraintSet set;
  set.ellipses.push_back({1, 3, {0, 0}, Eigen::Matrix2d::Identity()});
  const JointState x{{{0, 0, 0, 0}, {5, 0, 0, 0}}};
  std::vector<ConstraintValue> out;
  evaluate_constraints_at(x.stacked(), 2, set, out);
  EXPECT_TRUE(out.empty());
  evaluate_constraints_at(x.stacked(), 3, set, out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].value, 1.0);
}

TEST(GameProblem, ValidationRejectsMalformedProblems) {
  auto g = highway_problem(JointState{{{0, 3.0, 0, 10}, {20, 3.0, 0, 10}}}, {{}, {}});
  g.robot = 5;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g.robot = 0;
  g.horizon = 1;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace lucid
