#include "lucid/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

namespace lucid {
namespace {

// Continuous unicycle integrated with classic RK4 on fine substeps.
Eigen::Vector4d rk4_reference(const VehicleState& s, const VehicleControl& c, double h, int substeps) {
  auto f = [&](const Eigen::Vector4d& z) {
    return Eigen::Vector4d{z(3) * std::cos(z(2)), z(3) * std::sin(z(2)), c.yaw_rate, c.accel};
  };
  Eigen::Vector4d z = s.vector();
  const double dt = h / substeps;
  for (int i = 0; i < substeps; ++i) {
    const Eigen::Vector4d k1 = f(z);
    const Eigen::Vector4d k2 = f(z + 0.5 * dt * k1);
    const Eigen::Vector4d k3 = f(z + 0.5 * dt * k2);
    const Eigen::Vector4d k4 = f(z + dt * k3);
    z += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return z;
}

VehicleState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-50, 50), ang(-1.5, 1.5), spd(-5, 25);
  return {pos(rng), pos(rng), ang(rng), spd(rng)};
}

VehicleControl random_control(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> w(-1, 1), a(-4, 4);
  return {w(rng), a(rng)};
}

JointState random_joint(std::mt19937_64& rng, std::size_t m) {
  JointState x;
  for (std::size_t i = 0; i < m; ++i) x.vehicles.push_back(random_state(rng));
  return x;
}

TEST(UnicycleStep, RestIsAFixedPoint) {
  const auto s = unicycle_step({0, 0, 0, 0}, {0, 0}, 0.15);
  EXPECT_EQ(s, (VehicleState{0, 0, 0, 0}));
}

TEST(UnicycleStep, StraightLineAtConstantSpeed) {
  const auto s = unicycle_step({0, 0, 0, 1}, {0, 0}, 0.5);
  EXPECT_DOUBLE_EQ(s.px, 0.5);
  EXPECT_DOUBLE_EQ(s.py, 0.0);
  EXPECT_DOUBLE_EQ(s.heading, 0.0);
  EXPECT_DOUBLE_EQ(s.speed, 1.0);
}

TEST(UnicycleStep, AgreesWithFineRk4WhileTurning) {
  const VehicleState s{0, 0, 0, 1};
  const VehicleControl c{1, 0};
  const auto mid = unicycle_step(s, c, 0.1).vector();
  const auto ref = rk4_reference(s, c, 0.1, 100);
  EXPECT_LT((mid.head<2>() - ref.head<2>()).norm(), 1e-4);
  EXPECT_NEAR(mid(2), ref(2), 1e-12);
  EXPECT_NEAR(mid(3), ref(3), 1e-12);
}

TEST(UnicycleStep, RejectsNonFiniteInputAndBadStep) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(unicycle_step({nan, 0, 0, 0}, {0, 0}, 0.1), std::domain_error);
  EXPECT_THROW(unicycle_step({0, 0, 0, 0}, {0, std::numeric_limits<double>::infinity()}, 0.1), std::domain_error);
  EXPECT_THROW(unicycle_step({0, 0, 0, 0}, {0, 0}, 0.0), std::invalid_argument);
}

TEST(JointStep, RestStaysAtRest) {
  JointState x{{{0, 0, 0, 0}, {10, 3, 0.2, 0}}};
  JointControl u{{{0, 0}, {0, 0}}};
  EXPECT_EQ(joint_step(x, u, 0.15), x);
}

TEST(JointStep, StraightMotionAdvancesEachVehicle) {
  JointState x{{{0, 0, 0, 10}, {5, 3, 0, 20}}};
  JointControl u{{{0, 0}, {0, 0}}};
  const auto next = joint_step(x, u, 0.1);
  EXPECT_DOUBLE_EQ(next[0].px, 1.0);
  EXPECT_DOUBLE_EQ(next[1].px, 7.0);
  EXPECT_DOUBLE_EQ(next[1].py, 3.0);
}

TEST(JointStep, IsDecoupled) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + trial % 3;
    const JointState x = random_joint(rng, m);
    JointControl u;
    for (std::size_t i = 0; i < m; ++i) u.controls.push_back(random_control(rng));
    const auto next = joint_step(x, u, 0.15);
    for (std::size_t i = 0; i < m; ++i) EXPECT_EQ(next[i], unicycle_step(x[i], u[i], 0.15));
  }
}

TEST(JointStep, RejectsLengthMismatch) {
  JointState x{{{0, 0, 0, 0}, {0, 0, 0, 0}}};
  JointControl u{{{0, 0}}};
  EXPECT_THROW(joint_step(x, u, 0.1), std::invalid_argument);
}

TEST(Rollout, TwoStatesIsOneJointStep) {
  JointState x{{{0, 0, 0, 3}, {1, 1, 0.1, 2}}};
  ControlProfile U{{{0.1, 1}}, {{-0.2, 0.5}}};
  const auto X = rollout(x, U, 0.15);
  ASSERT_EQ(X.size(), 2u);
  EXPECT_EQ(X[0], x);
  EXPECT_EQ(X[1], joint_step(x, controls_at(U, 0), 0.15));
}

TEST(Rollout, ZeroControlsFromRestAreConstant) {
  JointState x{{{0, 0, 0, 0}, {4, 2, 0, 0}}};
  ControlProfile U(2, ControlSequence(10));
  for (const auto& s : rollout(x, U, 0.15)) EXPECT_EQ(s, x);
}

TEST(Rollout, SuffixIsConsistent) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> horizon(2, 40);
  for (int trial = 0; trial < 50; ++trial) {
    const int N = horizon(rng);
    const std::size_t m = 2 + trial % 2;
    const JointState x0 = random_joint(rng, m);
    ControlProfile U(m);
    for (auto& seq : U)
      for (int k = 0; k + 1 < N; ++k) seq.push_back(random_control(rng));
    const auto X = rollout(x0, U, 0.15);
    ASSERT_EQ(X.size(), static_cast<std::size_t>(N));
    const int j = N / 2;
    ControlProfile tail(m);
    for (std::size_t i = 0; i < m; ++i) tail[i].assign(U[i].begin() + j, U[i].end());
    const auto suffix = rollout(X[j], tail, 0.15);
    for (std::size_t k = 0; k < suffix.size(); ++k) EXPECT_EQ(suffix[k], X[j + k]);
  }
}

TEST(Rollout, RejectsRaggedSequences) {
  JointState x{{{0, 0, 0, 0}, {0, 0, 0, 0}}};
  ControlProfile U{ControlSequence(3), ControlSequence(2)};
  EXPECT_THROW(rollout(x, U, 0.1), std::invalid_argument);
}

TEST(StepJacobians, RestPositionBlockIsIdentity) {
  const auto J = step_jacobians({0, 0, 0, 0}, {0, 0}, 0.15);
  EXPECT_TRUE((J.state.topLeftCorner<2, 2>().isIdentity()));
  EXPECT_TRUE((J.state.bottomRightCorner<2, 2>().isIdentity()));
}

TEST(StepJacobians, VanishingStepGivesIdentity) {
  const auto J = step_jacobians({1, 2, 0.3, 12}, {0.4, -1}, 1e-9);
  EXPECT_LT((J.state - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LT(J.control.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(StepJacobians, MatchCentralFiniteDifferences) {
  std::mt19937_64 rng(3);
  const double h = 0.15;
  const double eps = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const VehicleState s = random_state(rng);
    const VehicleControl c = random_control(rng);
    const auto J = step_jacobians(s, c, h);
    Eigen::Matrix<double, 4, 6> fd;
    Eigen::Matrix<double, 6, 1> z;
    z << s.vector(), c.vector();
    for (int i = 0; i < 6; ++i) {
      Eigen::Matrix<double, 6, 1> zp = z, zm = z;
      zp(i) += eps;
      zm(i) -= eps;
      const auto fp = unicycle_step(VehicleState::from_vector(zp.head<4>()), VehicleControl::from_vector(zp.tail<2>()), h);
      const auto fm = unicycle_step(VehicleState::from_vector(zm.head<4>()), VehicleControl::from_vector(zm.tail<2>()), h);
      fd.col(i) = (fp.vector() - fm.vector()) / (2 * eps);
    }
    Eigen::Matrix<double, 4, 6> analytic;
    analytic << J.state, J.control;
    const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
    EXPECT_LT((fd - analytic).cwiseAbs().maxCoeff() / scale, 1e-6);
  }
}

TEST(StepCurvature, MatchesFiniteDifferenceOfJacobianContraction) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  const double h = 0.15;
  const double eps = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const VehicleState s = random_state(rng);
    const VehicleControl c = random_control(rng);
    const Eigen::Vector4d lam{g(rng), g(rng), g(rng), g(rng)};
    const auto W = step_curvature(s, c, h, lam);
    Eigen::Matrix<double, 6, 1> z;
    z << s.vector(), c.vector();
    auto contracted = [&](const Eigen::Matrix<double, 6, 1>& v) {
      const auto J = step_jacobians(VehicleState::from_vector(v.head<4>()), VehicleControl::from_vector(v.tail<2>()), h);
      Eigen::Matrix<double, 4, 6> full;
      full << J.state, J.control;
      return Eigen::Matrix<double, 6, 1>(full.transpose() * lam);
    };
    Eigen::Matrix<double, 6, 6> fd;
    for (int i = 0; i < 6; ++i) {
      Eigen::Matrix<double, 6, 1> zp = z, zm = z;
      zp(i) += eps;
      zm(i) -= eps;
      fd.col(i) = (contracted(zp) - contracted(zm)) / (2 * eps);
    }
    EXPECT_LT((fd - W).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, W.cwiseAbs().maxCoeff()));
    EXPECT_LT((W - W.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(JointState, StackingRoundTrips) {
  std::mt19937_64 rng(1);
  const JointState x = random_joint(rng, 3);
  EXPECT_EQ(JointState::from_stacked(x.stacked()), x);
}

}  // namespace
}  // namespace lucid
