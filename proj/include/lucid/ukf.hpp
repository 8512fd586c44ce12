#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "lucid/game_solver.hpp"
#include "lucid/objectives.hpp"
#include "lucid/scene.hpp"

namespace lucid {

/// Gaussian belief over theta.
struct Belief {
  ThetaVector mean;
  Eigen::MatrixXd cov;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

struct UkfConfig {
  double alpha = 1.0;
  double beta = 2.0;
  double kappa = 0.0;
  Eigen::MatrixXd process_noise;      // q x q
  Eigen::MatrixXd measurement_noise;  // n x n

  /// alpha^2 (q + kappa) - q
  double lambda(std::size_t q) const;
  /// Throws std::invalid_argument on bad scaling or noise shapes.
  void validate(std::size_t q, std::size_t n) const;

  static UkfConfig isotropic(std::size_t q, std::size_t n, double process_var = 1e-4, double measurement_var = 1e-4);
};

struct SigmaPointSet {
  std::vector<ThetaVector> points;  // 2q + 1: the mean, then +columns, then -columns
  Eigen::VectorXd mean_weights;
  Eigen::VectorXd cov_weights;
};

/// Points mean +/- columns of the Cholesky factor of (q + lambda) cov.
SigmaPointSet sigma_points(const ThetaVector& mean, const Eigen::MatrixXd& cov, const UkfConfig& cfg);

/// Symmetrizes and raises negative eigenvalues to zero.
Eigen::MatrixXd clamp_psd(const Eigen::MatrixXd& m);

struct UpdateDiagnostics {
  double innovation_norm = 0.0;
  double trace = 0.0;
  bool regularized = false;  // 1e-9 I was added to P
  bool skipped = false;      // P stayed singular; prediction step only
};

/// Maps a sigma point (and its index) to a predicted observation.
using MeasurementFunction = std::function<Eigen::VectorXd(const ThetaVector&, std::size_t)>;

struct UkfResult {
  Belief belief;
  SigmaPointSet sigma;
  std::vector<Eigen::VectorXd> predictions;
  UpdateDiagnostics diagnostics;
};

/// One predict/update cycle with a random-walk process model. The measurement
/// function is called once per sigma point, on up to `workers` threads.
UkfResult ukf_update(const Belief& current, const Eigen::VectorXd& observation, const MeasurementFunction& g,
                     const UkfConfig& cfg, std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Game-based measurement model

struct GamePrediction {
  JointState next;
  OpenLoopSolution plan;  // game solved with theta at the previous state
};

/// Predicted current state given theta. Agents act on the game solved with
/// theta. The robot applies `robot_control` when given (it knows what it did),
/// else the first control of the game solved with robot_belief_mean.
GamePrediction measurement_model(const ThetaVector& theta, const JointState& x_prev,
                                 const ThetaVector& robot_belief_mean, const Scene& scene,
                                 const std::optional<VehicleControl>& robot_control = std::nullopt,
                                 const OpenLoopSolution* warm_start = nullptr);

struct EstimatorResult {
  Belief belief;
  SigmaPointSet sigma;
  std::vector<OpenLoopSolution> plans;  // one per sigma point, solved at x_prev
  UpdateDiagnostics diagnostics;
  std::size_t unconverged = 0;
};

/// Belief update from the transition x_prev -> x_curr. Sigma games are solved
/// at x_prev and warm-started from `warm_start` when given.
EstimatorResult estimator_update(const JointState& x_prev, const JointState& x_curr, const ThetaVector& mu_prev,
                                 const Belief& current, const Scene& scene, const UkfConfig& cfg,
                                 const std::optional<VehicleControl>& robot_control = std::nullopt,
                                 const OpenLoopSolution* warm_start = nullptr, std::size_t workers = 1);

/// Sigma points of a belief pushed through the game at x (no update); used
/// for the first safety constraints before any observation arrives.
std::vector<OpenLoopSolution> sigma_plans(const SigmaPointSet& sigma, const JointState& x, const Scene& scene,
                                          const OpenLoopSolution* warm_start = nullptr, std::size_t workers = 1);

}  // namespace lucid
