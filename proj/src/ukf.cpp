#include "lucid/ukf.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "lucid/parallel.hpp"

namespace lucid {
namespace {

bool is_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) return false;
  if (m.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -1e-10;
}

}  // namespace

double UkfConfig::lambda(std::size_t q) const {
  const double qd = static_cast<double>(q);
  return alpha * alpha * (qd + kappa) - qd;
}

void UkfConfig::validate(std::size_t q, std::size_t n) const {
  if (!(alpha > 0.0)) throw std::invalid_argument("ukf: alpha must be positive");
  if (!(static_cast<double>(q) + lambda(q) > 0.0)) throw std::invalid_argument("ukf: q + lambda must be positive");
  if (process_noise.rows() != static_cast<Eigen::Index>(q) || !is_psd(process_noise))
    throw std::invalid_argument("ukf: process noise must be a q x q PSD matrix");
  if (measurement_noise.rows() != static_cast<Eigen::Index>(n) || !is_psd(measurement_noise))
    throw std::invalid_argument("ukf: measurement noise must be an n x n PSD matrix");
}

UkfConfig UkfConfig::isotropic(std::size_t q, std::size_t n, double process_var, double measurement_var) {
  UkfConfig c;
  c.process_noise = process_var * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
  c.measurement_noise =
      measurement_var * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  return c;
}

Eigen::MatrixXd clamp_psd(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  if (sym.size() == 0) return sym;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.eigenvalues().minCoeff() >= 0.0) return sym;
  const Eigen::VectorXd clamped = es.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

SigmaPointSet sigma_points(const ThetaVector& mean, const Eigen::MatrixXd& cov, const UkfConfig& cfg) {
  const auto q = static_cast<std::size_t>(mean.size());
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw std::invalid_argument("sigma points: covariance shape");
  const double lam = cfg.lambda(q);
  const double scale = static_cast<double>(q) + lam;
  if (!(scale > 0.0)) throw std::invalid_argument("sigma points: q + lambda must be positive");

  Eigen::MatrixXd scaled = scale * clamp_psd(cov);
  Eigen::LLT<Eigen::MatrixXd> llt(scaled);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-12 * std::max(1.0, scaled.diagonal().maxCoeff());
    scaled.diagonal().array() += jitter;
    llt.compute(scaled);
    if (llt.info() != Eigen::Success) throw std::runtime_error("sigma points: Cholesky factorization failed");
  }
  const Eigen::MatrixXd root = llt.matrixL();

  SigmaPointSet s;
  s.points.reserve(2 * q + 1);
  s.points.push_back(mean);
  for (std::size_t i = 0; i < q; ++i) s.points.push_back(mean + root.col(static_cast<Eigen::Index>(i)));
  for (std::size_t i = 0; i < q; ++i) s.points.push_back(mean - root.col(static_cast<Eigen::Index>(i)));
  const auto count = static_cast<Eigen::Index>(2 * q + 1);
  s.mean_weights = Eigen::VectorXd::Constant(count, 1.0 / (2.0 * scale));
  s.cov_weights = s.mean_weights;
  s.mean_weights(0) = lam / scale;
  s.cov_weights(0) = lam / scale + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
  return s;
}

UkfResult ukf_update(const Belief& current, const Eigen::VectorXd& observation, const MeasurementFunction& g,
                     const UkfConfig& cfg, std::size_t workers) {
  const std::size_t q = current.dim();
  const auto n = observation.size();
  cfg.validate(q, static_cast<std::size_t>(n));
  if (current.cov.rows() != static_cast<Eigen::Index>(q) || current.cov.cols() != static_cast<Eigen::Index>(q))
    throw std::invalid_argument("ukf: covariance shape");

  UkfResult r;
  const ThetaVector& mu_bar = current.mean;
  const Eigen::MatrixXd sigma_bar = current.cov + cfg.process_noise;
  r.sigma = sigma_points(mu_bar, sigma_bar, cfg);

  const std::size_t count = r.sigma.points.size();
  r.predictions.resize(count);
  parallel_for(count, workers, [&](std::size_t i) { r.predictions[i] = g(r.sigma.points[i], i); });
  for (const auto& chi : r.predictions)
    if (chi.size() != n || !chi.allFinite()) throw std::runtime_error("ukf: measurement has wrong size or is not finite");

  Eigen::VectorXd x_bar = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < count; ++i) x_bar += r.sigma.mean_weights(static_cast<Eigen::Index>(i)) * r.predictions[i];
  Eigen::MatrixXd P = cfg.measurement_noise;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q), n);
  for (std::size_t i = 0; i < count; ++i) {
    const double c = r.sigma.cov_weights(static_cast<Eigen::Index>(i));
    const Eigen::VectorXd dx = r.predictions[i] - x_bar;
    const Eigen::VectorXd dtheta = r.sigma.points[i] - mu_bar;
    P.noalias() += c * dx * dx.transpose();
    S.noalias() += c * dtheta * dx.transpose();
  }
  P = 0.5 * (P + P.transpose());

  Eigen::LDLT<Eigen::MatrixXd> ldlt(P);
  auto singular = [&] {
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return true;
    const Eigen::VectorXd d = ldlt.vectorD();
    return !(d.minCoeff() > 1e-14 * std::max(1.0, d.maxCoeff()));
  };
  if (singular()) {
    r.diagnostics.regularized = true;
    P.diagonal().array() += 1e-9;
    ldlt.compute(P);
  }
  const Eigen::VectorXd innovation = observation - x_bar;
  r.diagnostics.innovation_norm = innovation.norm();
  if (singular()) {
    r.diagnostics.skipped = true;
    r.belief = {mu_bar, clamp_psd(sigma_bar)};
  } else {
    const Eigen::MatrixXd K = ldlt.solve(S.transpose()).transpose();
    r.belief.mean = mu_bar + K * innovation;
    r.belief.cov = clamp_psd(sigma_bar - K * P * K.transpose());
  }
  r.diagnostics.trace = r.belief.cov.trace();
  return r;
}

// ---------------------------------------------------------------------------

GamePrediction measurement_model(const ThetaVector& theta, const JointState& x_prev,
                                 const ThetaVector& robot_belief_mean, const Scene& scene,
                                 const std::optional<VehicleControl>& robot_control,
                                 const OpenLoopSolution* warm_start) {
  GamePrediction out;
  const GameProblem agents_game = scene.problem(x_prev, theta);
  out.plan = solve(agents_game, scene.options, warm_start);
  JointControl u = controls_at(out.plan.U, 0);
  if (robot_control) {
    u.controls[scene.robot] = *robot_control;
  } else {
    const GameProblem robot_game = scene.problem(x_prev, robot_belief_mean);
    const OpenLoopSolution robot_plan = solve(robot_game, scene.options, warm_start);
    u.controls[scene.robot] = robot_plan.U[scene.robot][0];
  }
  out.next = joint_step(x_prev, u, scene.dt);
  return out;
}

EstimatorResult estimator_update(const JointState& x_prev, const JointState& x_curr, const ThetaVector& mu_prev,
                                 const Belief& current, const Scene& scene, const UkfConfig& cfg,
                                 const std::optional<VehicleControl>& robot_control,
                                 const OpenLoopSolution* warm_start, std::size_t workers) {
  std::optional<VehicleControl> robot_u = robot_control;
  if (!robot_u) {
    // Shared by every sigma point, so solve it once.
    const OpenLoopSolution robot_plan = solve(scene.problem(x_prev, mu_prev), scene.options, warm_start);
    robot_u = robot_plan.U[scene.robot][0];
  }
  std::vector<OpenLoopSolution> plans(2 * current.dim() + 1);
  const MeasurementFunction g = [&](const ThetaVector& theta, std::size_t i) {
    GamePrediction p = measurement_model(theta, x_prev, mu_prev, scene, robot_u, warm_start);
    plans[i] = std::move(p.plan);
    return p.next.stacked();
  };
  UkfResult r = ukf_update(current, x_curr.stacked(), g, cfg, workers);

  EstimatorResult out;
  out.belief = std::move(r.belief);
  out.sigma = std::move(r.sigma);
  out.plans = std::move(plans);
  out.diagnostics = r.diagnostics;
  for (const auto& p : out.plans) out.unconverged += p.converged ? 0 : 1;
  return out;
}

std::vector<OpenLoopSolution> sigma_plans(const SigmaPointSet& sigma, const JointState& x, const Scene& scene,
                                          const OpenLoopSolution* warm_start, std::size_t workers) {
  std::vector<OpenLoopSolution> plans(sigma.points.size());
  parallel_for(plans.size(), workers, [&](std::size_t i) {
    plans[i] = solve(scene.problem(x, sigma.points[i]), scene.options, warm_start);
  });
  return plans;
}

}  // namespace lucid
