#include "lucid/safety.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lucid {

double chi_square_2(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("chi-square: confidence must be in (0, 1)");
  return -2.0 * std::log1p(-confidence);
}

SafetyEllipse fit_ellipse(const std::vector<Eigen::Vector2d>& points, const Eigen::VectorXd& weights, double radius,
                          const SafetyOptions& options) {
  if (points.size() < 2) throw std::invalid_argument("ellipse fit: need at least two points");
  if (weights.size() != static_cast<Eigen::Index>(points.size()))
    throw std::invalid_argument("ellipse fit: one weight per point");
  const double total = weights.sum();
  if (!(std::abs(total) > 0.0)) throw std::invalid_argument("ellipse fit: weights sum to zero");

  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) mean += weights(static_cast<Eigen::Index>(i)) * points[i];
  mean /= total;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Vector2d d = points[i] - mean;
    cov += weights(static_cast<Eigen::Index>(i)) * d * d.transpose();
  }
  cov /= total;
  cov = 0.5 * (cov + cov.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const double chi2 = chi_square_2(options.confidence);
  Eigen::Vector2d axes;
  for (int i = 0; i < 2; ++i) {
    const double a = std::sqrt(chi2 * std::max(0.0, es.eigenvalues()(i)));
    axes(i) = std::max(a, options.min_inflation) + radius;
  }
  SafetyEllipse e;
  e.center = mean;
  e.shape = es.eigenvectors() * axes.cwiseAbs2().asDiagonal() * es.eigenvectors().transpose();
  e.shape = 0.5 * (e.shape + e.shape.transpose());
  return e;
}

std::vector<SafetyEllipse> fit_safety_ellipses(const std::vector<OpenLoopSolution>& samples,
                                               const Eigen::VectorXd& weights, std::size_t robot,
                                               const std::vector<double>& radius, const SafetyOptions& options,
                                               std::size_t shift) {
  if (samples.size() < 2) throw std::invalid_argument("safety: need at least two sampled plans");
  const std::size_t N = samples.front().X.size();
  const std::size_t M = N > 0 ? samples.front().X.front().size() : 0;
  for (const auto& s : samples)
    if (s.X.size() != N || (N > 0 && s.X.front().size() != M)) throw std::invalid_argument("safety: ragged plans");
  if (radius.size() != M) throw std::invalid_argument("safety: one radius per vehicle");

  std::vector<SafetyEllipse> out;
  std::vector<Eigen::Vector2d> pts(samples.size());
  for (std::size_t agent = 0; agent < M; ++agent) {
    if (agent == robot) continue;
    for (std::size_t k = 1; k < N; ++k) {
      const std::size_t src = std::min(k + shift, N - 1);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const VehicleState& v = samples[i].X[src][agent];
        pts[i] = {v.px, v.py};
      }
      SafetyEllipse e = fit_ellipse(pts, weights, radius[agent], options);
      e.agent = agent;
      e.step = k;
      out.push_back(e);
    }
  }
  return out;
}

double mean_area(const std::vector<SafetyEllipse>& ellipses) {
  if (ellipses.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : ellipses) sum += e.area();
  return sum / static_cast<double>(ellipses.size());
}

}  // namespace lucid
