#pragma once

#include <Eigen/Dense>

#include <vector>

namespace kpz {

struct LinearFit {
  double slope = 0, intercept = 0;
  double slope_stderr = 0;
};

/// Ordinary least squares y ~ intercept + slope x; stderr from the residual
/// variance (0 for an exact fit or two points).
LinearFit least_squares(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Slope of log y against log x. Inputs must be positive; at least 3 points.
LinearFit exponent_fit(const std::vector<double>& scale, const std::vector<double>& statistic);

}  // namespace kpz
