#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "lucid/ellipse.hpp"
#include "lucid/game_solver.hpp"

namespace lucid {

/// Quantile of the chi-square distribution with 2 degrees of freedom: -2 ln(1 - c).
double chi_square_2(double confidence);

struct SafetyOptions {
  double confidence = 0.95;
  double min_inflation = 0.1;  // floor on the fitted semi-axes, before adding the radius
};

/// Weighted Gaussian fit of 2D points scaled to the confidence region, with
/// `radius` added to each semi-axis. Negative weights are allowed (UKF weights);
/// the covariance is clamped to PSD. Degenerate spreads become a disk of
/// radius + min_inflation.
SafetyEllipse fit_ellipse(const std::vector<Eigen::Vector2d>& points, const Eigen::VectorXd& weights, double radius,
                          const SafetyOptions& options = {});

/// One ellipse per non-robot agent and per horizon step 1..N-1. Step k of the
/// result is fitted to step min(k + shift, N - 1) of the sampled plans, so
/// plans solved one step earlier are used with shift = 1. `radius[i]` is the
/// inflation for agent i (robot entry ignored).
std::vector<SafetyEllipse> fit_safety_ellipses(const std::vector<OpenLoopSolution>& samples,
                                               const Eigen::VectorXd& weights, std::size_t robot,
                                               const std::vector<double>& radius, const SafetyOptions& options = {},
                                               std::size_t shift = 0);

/// Mean ellipse area over all agents and steps (0 for an empty set).
double mean_area(const std::vector<SafetyEllipse>& ellipses);

}  // namespace lucid
