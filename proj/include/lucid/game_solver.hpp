#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lucid/constraints.hpp"
#include "lucid/dynamics.hpp"
#include "lucid/objectives.hpp"

namespace lucid {

/// Quadratic model of one player's stage cost at one step.
struct StageQuadratic {
  double value = 0.0;
  Eigen::VectorXd state_grad;    // n
  Eigen::MatrixXd state_hess;    // n x n
  Eigen::VectorXd control_grad;  // m_player (empty at the terminal step)
  Eigen::MatrixXd control_hess;  // m_player x m_player
};

/// A finite-horizon open-loop dynamic game in stacked-vector form. The solver
/// only talks to this interface, so test games can inject their own dynamics
/// and costs. Steps run k = 0 .. horizon-1; x_0 is fixed.
class GameModel {
 public:
  virtual ~GameModel() = default;

  virtual std::size_t num_players() const = 0;
  virtual Eigen::Index state_dim() const = 0;
  virtual Eigen::Index control_dim(std::size_t player) const = 0;
  virtual std::size_t horizon() const = 0;
  virtual Eigen::VectorXd initial_state() const = 0;

  /// u is the joint control, players stacked in order.
  virtual Eigen::VectorXd step(std::size_t k, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const = 0;
  virtual void linearize(std::size_t k, const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& A,
                         Eigen::MatrixXd& B) const = 0;
  /// sum_i costate_i * Hessian of step_i over (x, u); leave untouched for linear dynamics.
  virtual void add_curvature(std::size_t k, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& costate, Eigen::MatrixXd& W) const {
    (void)k, (void)x, (void)u, (void)costate, (void)W;
  }
  virtual bool has_curvature() const { return false; }

  /// `u_player` is empty at the terminal step.
  virtual void stage_cost(std::size_t player, std::size_t k, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u_player, StageQuadratic& out) const = 0;

  /// Inequalities c(x_k) <= 0 at step k >= 1. The count per step must not depend on x.
  virtual void constraints(std::size_t k, const Eigen::VectorXd& x, std::vector<ConstraintValue>& out) const {
    (void)k, (void)x, (void)out;
  }
};

struct SolverOptions {
  double tol_stationarity = 1e-6;
  double tol_feasibility = 1e-6;
  double initial_penalty = 1.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e8;
  int max_outer_iterations = 10;
  int max_inner_iterations = 30;
  double regularization = 1e-6;
  int max_line_search_steps = 12;
  double max_violation_increase = 0.5;  // per Newton step; stops iterates tunnelling through constraints
  bool trace = false;  // per-iteration log on stderr
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raw solver output in stacked form. Controls are player-major:
/// [u^1_0 .. u^1_{N-2}, u^2_0 ...].
struct GameSolution {
  std::vector<Eigen::VectorXd> states;  // N
  Eigen::VectorXd controls;
  Eigen::VectorXd multipliers;  // one per inequality, in evaluation order
  double stationarity = 0.0;    // max-norm of the stacked per-player gradients
  double violation = 0.0;
  int iterations = 0;
  int outer_iterations = 0;
  bool converged = false;
};

/// Augmented-Lagrangian Newton solver for open-loop Nash equilibria. Dynamics
/// are eliminated by rollout, so every iterate is dynamically feasible; the
/// Newton system is the Jacobian of all players' reduced stationarity
/// conditions. Deterministic: same inputs give bit-identical output.
GameSolution solve_game(const GameModel& model, const SolverOptions& options,
                        const Eigen::VectorXd* warm_controls = nullptr,
                        const Eigen::VectorXd* warm_multipliers = nullptr);

/// Per-player stationarity of the plain Lagrangian (cost + multipliers . c)
/// at the given controls; returns the stacked gradient.
Eigen::VectorXd stationarity_vector(const GameModel& model, const Eigen::VectorXd& controls,
                                    const Eigen::VectorXd& multipliers);

/// Jacobian of stationarity_vector with respect to the controls.
Eigen::MatrixXd stationarity_jacobian(const GameModel& model, const Eigen::VectorXd& controls,
                                      const Eigen::VectorXd& multipliers);

/// max over players of the max-norm of that player's stationarity block.
double nash_residual(const GameModel& model, const Eigen::VectorXd& controls, const Eigen::VectorXd& multipliers);

// ---------------------------------------------------------------------------
// Vehicle games

struct PlayerObjective {
  ObjectiveParams params;
  CostWeights weights;
};

struct GameProblem {
  std::size_t horizon = 21;
  double dt = 0.15;
  std::size_t robot = 0;
  JointState x0;
  std::vector<PlayerObjective> players;  // one per vehicle
  ConstraintSet constraints;

  std::size_t num_players() const { return players.size(); }
  void validate() const;
};

struct OpenLoopSolution {
  StateTrajectory X;
  ControlProfile U;
  Eigen::VectorXd multipliers;
  double stationarity = 0.0;
  double violation = 0.0;
  int iterations = 0;
  int outer_iterations = 0;
  bool converged = false;

  Eigen::VectorXd stacked_controls() const;
};

/// GameModel view of a vehicle GameProblem (unicycle dynamics, quadratic
/// tracking plus proximity costs, shared constraint set).
class VehicleGame final : public GameModel {
 public:
  explicit VehicleGame(const GameProblem& problem);

  std::size_t num_players() const override { return problem_.players.size(); }
  Eigen::Index state_dim() const override { return kVehicleStateDim * static_cast<Eigen::Index>(num_players()); }
  Eigen::Index control_dim(std::size_t) const override { return kVehicleControlDim; }
  std::size_t horizon() const override { return problem_.horizon; }
  Eigen::VectorXd initial_state() const override { return x0_; }

  Eigen::VectorXd step(std::size_t k, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;
  void linearize(std::size_t k, const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& A,
                 Eigen::MatrixXd& B) const override;
  void add_curvature(std::size_t k, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                     const Eigen::VectorXd& costate, Eigen::MatrixXd& W) const override;
  bool has_curvature() const override { return true; }
  void stage_cost(std::size_t player, std::size_t k, const Eigen::VectorXd& x, const Eigen::VectorXd& u_player,
                  StageQuadratic& out) const override;
  void constraints(std::size_t k, const Eigen::VectorXd& x, std::vector<ConstraintValue>& out) const override;

 private:
  const GameProblem& problem_;
  Eigen::VectorXd x0_;
};

Eigen::VectorXd stack_controls(const ControlProfile& U);
ControlProfile unstack_controls(const Eigen::VectorXd& controls, std::size_t players, std::size_t steps);

/// Solves a vehicle game. The warm start is used when its shapes match the problem.
OpenLoopSolution solve(const GameProblem& problem, const SolverOptions& options = {},
                       const OpenLoopSolution* warm_start = nullptr);

double nash_residual(const OpenLoopSolution& solution, const GameProblem& problem);

/// Warm start for the next MPC step: drop the first control, repeat the last.
OpenLoopSolution shift_plan(const OpenLoopSolution& plan);

}  // namespace lucid
