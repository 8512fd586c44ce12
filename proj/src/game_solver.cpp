#include "lucid/game_solver.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace lucid {
namespace {

struct Layout {
  std::size_t players = 0;
  std::size_t horizon = 0;
  Eigen::Index n = 0;
  Eigen::Index joint_m = 0;  // sum of control dims
  Eigen::Index dim = 0;      // all decision variables
  std::vector<Eigen::Index> m;
  std::vector<Eigen::Index> offset;        // player block start in the stacked controls
  std::vector<Eigen::Index> joint_offset;  // player block start in a joint control

  explicit Layout(const GameModel& model) {
    players = model.num_players();
    horizon = model.horizon();
    n = model.state_dim();
    if (horizon < 2) throw std::invalid_argument("game: horizon must be at least 2");
    if (players == 0) throw std::invalid_argument("game: no players");
    for (std::size_t p = 0; p < players; ++p) {
      m.push_back(model.control_dim(p));
      offset.push_back(dim);
      joint_offset.push_back(joint_m);
      dim += m.back() * static_cast<Eigen::Index>(horizon - 1);
      joint_m += m.back();
    }
  }

  Eigen::Index rows(std::size_t p) const { return m[p] * static_cast<Eigen::Index>(horizon - 1); }
  Eigen::Index at(std::size_t p, std::size_t k) const { return offset[p] + static_cast<Eigen::Index>(k) * m[p]; }
};

enum class MultiplierMode { augmented, plain };

struct Evaluation {
  std::vector<Eigen::VectorXd> x;  // N
  std::vector<Eigen::VectorXd> u;  // N-1 joint controls
  std::vector<Eigen::MatrixXd> A, B;
  std::vector<ConstraintValue> constraints;
  Eigen::VectorXd effective;  // multiplier seen by the Lagrangian, per constraint
  std::vector<std::vector<Eigen::VectorXd>> lx;   // [player][k]
  std::vector<std::vector<Eigen::MatrixXd>> lxx;  // [player][k]
  std::vector<std::vector<Eigen::VectorXd>> lu;   // [player][k]
  std::vector<std::vector<Eigen::MatrixXd>> luu;  // [player][k]
  std::vector<std::vector<Eigen::VectorXd>> costate;  // [player][k], k >= 1
  Eigen::VectorXd residual;
  double violation = 0.0;
};

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

void evaluate(const GameModel& model, const Layout& L, const Eigen::VectorXd& U, const Eigen::VectorXd& lambda,
              double penalty, MultiplierMode mode, bool hessians, Evaluation& e) {
  const std::size_t N = L.horizon;
  e.x.resize(N);
  e.u.resize(N - 1);
  e.A.resize(N - 1);
  e.B.resize(N - 1);
  e.x[0] = model.initial_state();
  for (std::size_t k = 0; k + 1 < N; ++k) {
    e.u[k].resize(L.joint_m);
    for (std::size_t p = 0; p < L.players; ++p) e.u[k].segment(L.joint_offset[p], L.m[p]) = U.segment(L.at(p, k), L.m[p]);
    e.x[k + 1] = model.step(k, e.x[k], e.u[k]);
    if (!all_finite(e.x[k + 1])) throw SolverError("game solver: non-finite state in rollout");
    model.linearize(k, e.x[k], e.u[k], e.A[k], e.B[k]);
  }

  e.constraints.clear();
  for (std::size_t k = 1; k < N; ++k) model.constraints(k, e.x[k], e.constraints);
  const auto nc = static_cast<Eigen::Index>(e.constraints.size());
  if (lambda.size() != nc) throw std::logic_error("game solver: multiplier count changed");
  e.effective.resize(nc);
  e.violation = 0.0;
  for (Eigen::Index i = 0; i < nc; ++i) {
    const double c = e.constraints[i].value;
    e.violation = std::max(e.violation, c);
    e.effective(i) = (mode == MultiplierMode::augmented) ? std::max(0.0, lambda(i) + penalty * c) : lambda(i);
  }

  e.lx.resize(L.players);
  e.lxx.resize(L.players);
  e.lu.resize(L.players);
  e.luu.resize(L.players);
  e.costate.resize(L.players);
  e.residual.resize(L.dim);
  StageQuadratic stage;
  const Eigen::VectorXd empty;
  for (std::size_t p = 0; p < L.players; ++p) {
    auto& lx = e.lx[p];
    auto& lxx = e.lxx[p];
    lx.resize(N);
    lxx.resize(N);
    e.lu[p].resize(N - 1);
    e.luu[p].resize(N - 1);
    for (std::size_t k = 0; k < N; ++k) {
      if (k + 1 < N) {
        const Eigen::VectorXd up = e.u[k].segment(L.joint_offset[p], L.m[p]);
        model.stage_cost(p, k, e.x[k], up, stage);
        e.lu[p][k] = stage.control_grad;
        e.luu[p][k] = stage.control_hess;
      } else {
        model.stage_cost(p, k, e.x[k], empty, stage);
      }
      lx[k] = stage.state_grad;
      if (hessians) lxx[k] = stage.state_hess;
    }
    for (Eigen::Index i = 0; i < nc; ++i) {
      const ConstraintValue& c = e.constraints[i];
      if (!(c.players & (1u << p))) continue;
      const double y = e.effective(i);
      const bool active = mode == MultiplierMode::augmented && lambda(i) + penalty * c.value > 0.0;
      for (int a = 0; a < c.count; ++a) {
        lx[c.step](c.index[a]) += y * c.grad(a);
        if (!hessians) continue;
        for (int b = 0; b < c.count; ++b) {
          double h = y * c.hess(a, b);
          if (active) h += penalty * c.grad(a) * c.grad(b);
          lxx[c.step](c.index[a], c.index[b]) += h;
        }
      }
    }

    auto& lam = e.costate[p];
    lam.resize(N);
    lam[N - 1] = lx[N - 1];
    for (std::size_t k = N - 2; k >= 1; --k) lam[k] = lx[k] + e.A[k].transpose() * lam[k + 1];
    for (std::size_t k = 0; k + 1 < N; ++k) {
      e.residual.segment(L.at(p, k), L.m[p]) =
          e.lu[p][k] + e.B[k].middleCols(L.joint_offset[p], L.m[p]).transpose() * lam[k + 1];
    }
  }
}

Eigen::MatrixXd jacobian(const GameModel& model, const Layout& L, const Evaluation& e) {
  const std::size_t N = L.horizon;
  const Eigen::Index n = L.n;
  const bool curved = model.has_curvature();

  // Sensitivities dx_k / dU. Only columns of controls applied before k are nonzero.
  std::vector<Eigen::MatrixXd> T(N);
  T[0] = Eigen::MatrixXd::Zero(n, L.dim);
  for (std::size_t k = 0; k + 1 < N; ++k) {
    const Eigen::Index used = static_cast<Eigen::Index>(k);
    T[k + 1] = Eigen::MatrixXd::Zero(n, L.dim);
    for (std::size_t q = 0; q < L.players; ++q) {
      if (used > 0)
        T[k + 1].middleCols(L.offset[q], used * L.m[q]).noalias() = e.A[k] * T[k].middleCols(L.offset[q], used * L.m[q]);
      T[k + 1].middleCols(L.at(q, k), L.m[q]) = e.B[k].middleCols(L.joint_offset[q], L.m[q]);
    }
  }

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(L.dim, L.dim);
  Eigen::MatrixXd W(n + L.joint_m, n + L.joint_m);
  Eigen::MatrixXd G;
  for (std::size_t p = 0; p < L.players; ++p) {
    const Eigen::Index r0 = L.offset[p];
    const Eigen::Index mp = L.m[p];
    for (std::size_t k = 0; k < N; ++k) {
      const bool has_control = k + 1 < N;
      const bool with_curvature = curved && has_control;
      if (with_curvature) {
        W.setZero();
        model.add_curvature(k, e.x[k], e.u[k], e.costate[p][k + 1], W);
      }
      const Eigen::Index ku = has_control ? static_cast<Eigen::Index>(k) : 0;
      if (k >= 1) {
        G = e.lxx[p][k];
        if (with_curvature) G += W.topLeftCorner(n, n);
        // Columns of player p's controls that influence x_k.
        const Eigen::Index live = static_cast<Eigen::Index>(k) * mp;
        const auto Tp = T[k].middleCols(r0, live);
        J.block(r0, 0, live, L.dim).noalias() += Tp.transpose() * (G * T[k]);
        if (with_curvature) {
          const Eigen::MatrixXd cross = Tp.transpose() * W.block(0, n, n, L.joint_m);
          for (std::size_t q = 0; q < L.players; ++q)
            J.block(r0, L.at(q, k), live, L.m[q]) += cross.middleCols(L.joint_offset[q], L.m[q]);
          J.block(r0 + ku * mp, 0, mp, L.dim).noalias() += W.block(n + L.joint_offset[p], 0, mp, n) * T[k];
        }
      }
      if (!has_control) continue;
      J.block(r0 + ku * mp, r0 + ku * mp, mp, mp) += e.luu[p][k];
      if (with_curvature) {
        for (std::size_t q = 0; q < L.players; ++q)
          J.block(r0 + ku * mp, L.at(q, k), mp, L.m[q]) +=
              W.block(n + L.joint_offset[p], n + L.joint_offset[q], mp, L.m[q]);
      }
    }
  }
  return J;
}

struct Candidate {
  Eigen::VectorXd controls;
  Eigen::VectorXd multipliers;
  std::vector<Eigen::VectorXd> states;
  double stationarity = std::numeric_limits<double>::infinity();
  double violation = std::numeric_limits<double>::infinity();

  double score(const SolverOptions& o) const {
    return std::max(stationarity / o.tol_stationarity, violation / o.tol_feasibility);
  }
};

}  // namespace

GameSolution solve_game(const GameModel& model, const SolverOptions& options, const Eigen::VectorXd* warm_controls,
                        const Eigen::VectorXd* warm_multipliers) {
  const Layout L(model);
  Eigen::VectorXd U = Eigen::VectorXd::Zero(L.dim);
  if (warm_controls != nullptr && warm_controls->size() == L.dim) U = *warm_controls;

  // Count inequalities with a probe rollout.
  Eigen::Index nc = 0;
  {
    Evaluation probe;
    const std::size_t N = L.horizon;
    Eigen::VectorXd x = model.initial_state();
    std::vector<ConstraintValue> cons;
    for (std::size_t k = 0; k + 1 < N; ++k) {
      Eigen::VectorXd u(L.joint_m);
      for (std::size_t p = 0; p < L.players; ++p) u.segment(L.joint_offset[p], L.m[p]) = U.segment(L.at(p, k), L.m[p]);
      x = model.step(k, x, u);
      model.constraints(k + 1, x, cons);
    }
    nc = static_cast<Eigen::Index>(cons.size());
  }
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(nc);
  if (warm_multipliers != nullptr && warm_multipliers->size() == nc) lambda = warm_multipliers->cwiseMax(0.0);

  double penalty = options.initial_penalty;
  Evaluation e;
  Evaluation trial;
  evaluate(model, L, U, lambda, penalty, MultiplierMode::augmented, true, e);

  GameSolution out;
  Candidate best;
  int iterations = 0;
  int outer = 0;
  bool converged = false;
  double last_violation = std::numeric_limits<double>::infinity();
  for (outer = 1; outer <= options.max_outer_iterations; ++outer) {
    std::vector<double> history;
    for (int inner = 0; inner < options.max_inner_iterations; ++inner) {
      if (e.residual.lpNorm<Eigen::Infinity>() <= options.tol_stationarity) break;
      const Eigen::MatrixXd J = jacobian(model, L, e);
      const double merit = 0.5 * e.residual.squaredNorm();
      if (history.empty()) history.push_back(merit);

      Eigen::VectorXd step;
      double reg = options.regularization;
      for (int attempt = 0; attempt < 10; ++attempt, reg *= 10.0) {
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(J + reg * Eigen::MatrixXd::Identity(L.dim, L.dim));
        step = lu.solve(-e.residual);
        if (step.allFinite() && lu.rcond() > 1e-14) break;
        step.resize(0);
      }
      if (step.size() == 0) break;

      // Nonmonotone Armijo test against the worst of the recent merits.
      const double reference = *std::max_element(history.begin(), history.end());
      bool accepted = false;
      double alpha = 1.0;
      double best_alpha = 0.0;
      double best_merit = std::numeric_limits<double>::infinity();
      for (int ls = 0; ls < options.max_line_search_steps; ++ls, alpha *= 0.5) {
        const Eigen::VectorXd candidate = U + alpha * step;
        try {
          evaluate(model, L, candidate, lambda, penalty, MultiplierMode::augmented, false, trial);
        } catch (const SolverError&) {
          continue;
        }
        if (trial.violation > std::max(e.violation, options.tol_feasibility) + options.max_violation_increase) continue;
        const double m = 0.5 * trial.residual.squaredNorm();
        if (m < best_merit) best_merit = m, best_alpha = alpha;
        if (m <= (1.0 - 2e-4 * alpha) * reference) {
          accepted = true;
          break;
        }
      }
      if (accepted) {
        U += alpha * step;
      } else if (best_alpha > 0.0 && best_merit < merit) {
        alpha = best_alpha;
        U += alpha * step;
        accepted = true;
      }
      if (accepted) {
        history.push_back(merit);
        if (history.size() > 5) history.erase(history.begin());
      }
      ++iterations;
      if (options.trace)
        std::fprintf(stderr, "outer %d inner %d |F| %.3e viol %.3e rho %.1e alpha %.3g reg %.1e%s\n", outer, inner,
                     e.residual.lpNorm<Eigen::Infinity>(), e.violation, penalty, alpha, reg, accepted ? "" : " (rejected)");
      if (!accepted) break;
      evaluate(model, L, U, lambda, penalty, MultiplierMode::augmented, true, e);
    }

    Candidate now{U, e.effective, e.x, e.residual.lpNorm<Eigen::Infinity>(), e.violation};
    if (now.score(options) < best.score(options)) best = now;
    if (now.stationarity <= options.tol_stationarity && now.violation <= options.tol_feasibility) {
      converged = true;
      break;
    }
    if (outer == options.max_outer_iterations) break;
    lambda = e.effective;
    if (now.violation > 0.25 * last_violation)
      penalty = std::min(penalty * options.penalty_growth, options.max_penalty);
    last_violation = std::min(last_violation, now.violation);
    evaluate(model, L, U, lambda, penalty, MultiplierMode::augmented, true, e);
  }

  out.controls = best.controls;
  out.multipliers = best.multipliers;
  out.states = best.states;
  out.stationarity = best.stationarity;
  out.violation = best.violation;
  out.iterations = iterations;
  out.outer_iterations = std::min(outer, options.max_outer_iterations);
  out.converged = converged;
  if (!out.controls.allFinite()) throw SolverError("game solver: non-finite controls");
  return out;
}

Eigen::VectorXd stationarity_vector(const GameModel& model, const Eigen::VectorXd& controls,
                                    const Eigen::VectorXd& multipliers) {
  const Layout L(model);
  if (controls.size() != L.dim) throw std::invalid_argument("stationarity: control vector has wrong size");
  Evaluation e;
  evaluate(model, L, controls, multipliers, 0.0, MultiplierMode::plain, false, e);
  return e.residual;
}

Eigen::MatrixXd stationarity_jacobian(const GameModel& model, const Eigen::VectorXd& controls,
                                      const Eigen::VectorXd& multipliers) {
  const Layout L(model);
  if (controls.size() != L.dim) throw std::invalid_argument("stationarity: control vector has wrong size");
  Evaluation e;
  evaluate(model, L, controls, multipliers, 0.0, MultiplierMode::plain, true, e);
  return jacobian(model, L, e);
}

double nash_residual(const GameModel& model, const Eigen::VectorXd& controls, const Eigen::VectorXd& multipliers) {
  const Layout L(model);
  const Eigen::VectorXd r = stationarity_vector(model, controls, multipliers);
  double worst = 0.0;
  for (std::size_t p = 0; p < L.players; ++p)
    worst = std::max(worst, r.segment(L.offset[p], L.rows(p)).lpNorm<Eigen::Infinity>());
  return worst;
}

// ---------------------------------------------------------------------------

void GameProblem::validate() const {
  if (horizon < 2) throw std::invalid_argument("game problem: horizon must be at least 2");
  if (!(dt > 0.0)) throw std::invalid_argument("game problem: time step must be positive");
  if (players.empty()) throw std::invalid_argument("game problem: no players");
  if (players.size() > 32) throw std::invalid_argument("game problem: at most 32 players");
  if (x0.size() != players.size()) throw std::invalid_argument("game problem: one initial state per player");
  if (robot >= players.size()) throw std::invalid_argument("game problem: robot index out of range");
  for (const auto& p : players) p.weights.validate(players.size());
}

VehicleGame::VehicleGame(const GameProblem& problem) : problem_(problem), x0_(problem.x0.stacked()) {
  problem_.validate();
}

Eigen::VectorXd VehicleGame::step(std::size_t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  Eigen::VectorXd next(x.size());
  for (std::size_t i = 0; i < num_players(); ++i) {
    const auto s = VehicleState::from_vector(x.segment<4>(4 * i));
    const auto c = VehicleControl::from_vector(u.segment<2>(2 * i));
    next.segment<4>(4 * i) = unicycle_step(s, c, problem_.dt).vector();
  }
  return next;
}

void VehicleGame::linearize(std::size_t, const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& A,
                            Eigen::MatrixXd& B) const {
  const Eigen::Index n = state_dim();
  A.setZero(n, n);
  B.setZero(n, 2 * static_cast<Eigen::Index>(num_players()));
  for (std::size_t i = 0; i < num_players(); ++i) {
    const auto J = step_jacobians(VehicleState::from_vector(x.segment<4>(4 * i)),
                                  VehicleControl::from_vector(u.segment<2>(2 * i)), problem_.dt);
    A.block<4, 4>(4 * i, 4 * i) = J.state;
    B.block<4, 2>(4 * i, 2 * i) = J.control;
  }
}

void VehicleGame::add_curvature(std::size_t, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                const Eigen::VectorXd& costate, Eigen::MatrixXd& W) const {
  const Eigen::Index n = state_dim();
  for (std::size_t i = 0; i < num_players(); ++i) {
    const auto H = step_curvature(VehicleState::from_vector(x.segment<4>(4 * i)),
                                  VehicleControl::from_vector(u.segment<2>(2 * i)), problem_.dt,
                                  costate.segment<4>(4 * i));
    const Eigen::Index s = 4 * static_cast<Eigen::Index>(i);
    const Eigen::Index c = n + 2 * static_cast<Eigen::Index>(i);
    W.block<4, 4>(s, s) += H.topLeftCorner<4, 4>();
    W.block<4, 2>(s, c) += H.topRightCorner<4, 2>();
    W.block<2, 4>(c, s) += H.bottomLeftCorner<2, 4>();
    W.block<2, 2>(c, c) += H.bottomRightCorner<2, 2>();
  }
}

void VehicleGame::stage_cost(std::size_t player, std::size_t k, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u_player, StageQuadratic& out) const {
  thread_local StageDerivatives d;
  const auto& obj = problem_.players[player];
  if (u_player.size() == 2) {
    const Eigen::Vector2d u = u_player;
    stage_derivatives(x, &u, k, problem_.horizon, obj.params, obj.weights, player, d);
    out.control_grad = d.control_grad;
    out.control_hess = d.control_hess;
  } else {
    stage_derivatives(x, nullptr, k, problem_.horizon, obj.params, obj.weights, player, d);
    out.control_grad.resize(0);
    out.control_hess.resize(0, 0);
  }
  out.value = d.value;
  out.state_grad = d.state_grad;
  out.state_hess = d.state_hess;
}

void VehicleGame::constraints(std::size_t k, const Eigen::VectorXd& x, std::vector<ConstraintValue>& out) const {
  evaluate_constraints_at(x, k, problem_.constraints, out);
}

Eigen::VectorXd stack_controls(const ControlProfile& U) {
  Eigen::Index total = 0;
  for (const auto& seq : U) total += 2 * static_cast<Eigen::Index>(seq.size());
  Eigen::VectorXd out(total);
  Eigen::Index i = 0;
  for (const auto& seq : U)
    for (const auto& c : seq) {
      out(i++) = c.yaw_rate;
      out(i++) = c.accel;
    }
  return out;
}

ControlProfile unstack_controls(const Eigen::VectorXd& controls, std::size_t players, std::size_t steps) {
  if (controls.size() != static_cast<Eigen::Index>(2 * players * steps))
    throw std::invalid_argument("controls: stacked size mismatch");
  ControlProfile U(players, ControlSequence(steps));
  Eigen::Index i = 0;
  for (auto& seq : U)
    for (auto& c : seq) {
      c.yaw_rate = controls(i++);
      c.accel = controls(i++);
    }
  return U;
}

Eigen::VectorXd OpenLoopSolution::stacked_controls() const { return stack_controls(U); }

OpenLoopSolution solve(const GameProblem& problem, const SolverOptions& options, const OpenLoopSolution* warm_start) {
  const VehicleGame game(problem);
  const std::size_t steps = problem.horizon - 1;
  Eigen::VectorXd warm;
  const Eigen::VectorXd* warm_ptr = nullptr;
  const Eigen::VectorXd* mult_ptr = nullptr;
  if (warm_start != nullptr && warm_start->U.size() == problem.num_players() &&
      std::all_of(warm_start->U.begin(), warm_start->U.end(), [&](const auto& s) { return s.size() == steps; })) {
    warm = warm_start->stacked_controls();
    warm_ptr = &warm;
    mult_ptr = &warm_start->multipliers;
  }
  const GameSolution raw = solve_game(game, options, warm_ptr, mult_ptr);

  OpenLoopSolution sol;
  sol.X.reserve(raw.states.size());
  for (const auto& x : raw.states) sol.X.push_back(JointState::from_stacked(x));
  sol.U = unstack_controls(raw.controls, problem.num_players(), steps);
  sol.multipliers = raw.multipliers;
  sol.stationarity = raw.stationarity;
  sol.violation = raw.violation;
  sol.iterations = raw.iterations;
  sol.outer_iterations = raw.outer_iterations;
  sol.converged = raw.converged;
  return sol;
}

double nash_residual(const OpenLoopSolution& solution, const GameProblem& problem) {
  const VehicleGame game(problem);
  return nash_residual(game, solution.stacked_controls(), solution.multipliers);
}

OpenLoopSolution shift_plan(const OpenLoopSolution& plan) {
  OpenLoopSolution next = plan;
  for (auto& seq : next.U) {
    if (seq.size() < 2) continue;
    std::rotate(seq.begin(), seq.begin() + 1, seq.end());
    seq.back() = seq[seq.size() - 2];
  }
  if (next.X.size() >= 2) {
    std::rotate(next.X.begin(), next.X.begin() + 1, next.X.end());
    next.X.back() = next.X[next.X.size() - 2];
  }
  // Multipliers are laid out step-major from step 1, shift by one step's worth.
  const Eigen::Index per_step = plan.X.size() > 1 ? plan.multipliers.size() / static_cast<Eigen::Index>(plan.X.size() - 1) : 0;
  if (per_step > 0 && plan.multipliers.size() % per_step == 0 && plan.multipliers.size() > per_step) {
    const Eigen::Index keep = plan.multipliers.size() - per_step;
    next.multipliers.head(keep) = plan.multipliers.tail(keep);
    next.multipliers.tail(per_step) = plan.multipliers.tail(per_step);
  }
  return next;
}

}  // namespace lucid
