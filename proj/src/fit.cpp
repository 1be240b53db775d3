#include "kpz/fit.hpp"

#include "kpz/core.hpp"

#include <cmath>

namespace kpz {

LinearFit least_squares(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::parameter, "least squares needs 2+ paired points");
  const Eigen::Index n = x.size();
  const double mx = x.mean(), my = y.mean();
  const Eigen::VectorXd dx = x.array() - mx;
  const double sxx = dx.squaredNorm();
  require(sxx > 0, ErrorKind::parameter, "least squares needs distinct abscissae");
  LinearFit fit;
  fit.slope = dx.dot(y.array().matrix() - Eigen::VectorXd::Constant(n, my)) / sxx;
  fit.intercept = my - fit.slope * mx;
  if (n > 2) {
    const Eigen::VectorXd resid = y.array() - (fit.intercept + fit.slope * x.array());
    fit.slope_stderr = std::sqrt(resid.squaredNorm() / double(n - 2) / sxx);
  }
  return fit;
}

LinearFit exponent_fit(const std::vector<double>& scale, const std::vector<double>& statistic) {
  require(scale.size() == statistic.size(), ErrorKind::parameter, "exponent fit needs paired data");
  require(scale.size() >= 3, ErrorKind::parameter, "exponent fit needs at least 3 scales");
  Eigen::VectorXd lx(scale.size()), ly(scale.size());
  for (std::size_t k = 0; k < scale.size(); ++k) {
    require(scale[k] > 0 && statistic[k] > 0, ErrorKind::range, "exponent fit needs positive data");
    lx[k] = std::log(scale[k]);
    ly[k] = std::log(statistic[k]);
  }
  return least_squares(lx, ly);
}

}  // namespace kpz
