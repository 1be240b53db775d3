#pragma once

#include "kpz/fit.hpp"
#include "kpz/parallel.hpp"
#include "kpz/rare.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace kpz {

/// P(K > lambda) for the Kolmogorov distribution, 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_survival(double lambda);

/// Standard normal cdf and upper tail.
double normal_cdf(double z);
double normal_upper_tail(double z);
/// log Q(z), accurate far into the upper tail.
double log_normal_upper_tail(double z);

struct KsResult {
  double statistic = 0;  // sup |F - G|
  double effective_n = 0;
  double p_value = 1;    // asymptotic, with the Stephens small-sample factor
};

/// Weighted empirical cdf of `x` (weights summing to 1) against N(0, variance);
/// effective_n is 1 / sum w^2.
KsResult ks_normal(const std::vector<double>& x, const std::vector<double>& weights, double variance);
KsResult ks_normal(const std::vector<double>& x, double variance);
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Inverse weighted ecdf: smallest value whose cumulative weight reaches q.
double weighted_quantile(const std::vector<double>& x, const std::vector<double>& weights, double q);
double weighted_mean(const std::vector<double>& x, const std::vector<double>& weights);
/// Reliability-weighted covariance sum w (x - mx)(y - my) / (1 - sum w^2);
/// the usual n - 1 estimator at equal weights.
double weighted_covariance(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<double>& weights);

/// Rescaled transversal position of the path at each time, per sample:
/// geodesic site at zero temperature, backbone argmax otherwise, on the
/// (0, 0) -> (n-1, n-1) core of the sample's environment.
struct PathPositions {
  std::vector<double> times;
  std::vector<std::int64_t> replicates;
  std::vector<double> weights;     // normalized
  Eigen::MatrixXd x;               // samples x times
  double threshold_L = 0;
  double effective_samples = 0;

  std::vector<double> column(std::size_t k) const;
};

/// Samples are taken in canonical (replicate) order.
PathPositions path_positions(const ConditionedEnsemble& ensemble, const std::vector<double>& times,
                             int threads = default_threads());

struct BridgeFddReport {
  std::vector<double> times;
  std::int64_t samples = 0;
  double effective_samples = 0;
  double threshold_L = 0;
  double scale = 0;  // 2 L^{1/4}
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;         // of scale * pi(s_i)
  Eigen::MatrixXd target_covariance;  // s_i (1 - s_j), i <= j
  std::vector<double> raw_variance;   // of pi(s_i) itself
  std::vector<KsResult> ks;           // vs N(0, s (1 - s))
  PathPositions positions;

  double variance(std::size_t k) const { return covariance(k, k); }
  double target_variance(std::size_t k) const { return target_covariance(k, k); }
  nlohmann::json to_json() const;
  /// replicate,weight,pi_1..pi_k (rescaled, before the 2 L^{1/4} factor)
  void write_csv(std::ostream& out) const;
};

/// Brownian bridge covariance s_i (1 - s_j) for s_i <= s_j.
Eigen::MatrixXd bridge_covariance(const std::vector<double>& times);

/// Needs 200+ samples, a finite threshold > 0 and times in (0, 1).
BridgeFddReport bridge_fdd(const ConditionedEnsemble& ensemble, const std::vector<double>& times,
                           int threads = default_threads());
BridgeFddReport bridge_fdd(const PathPositions& positions);

struct IncrementReport {
  double s = 0, t = 0;
  std::int64_t samples = 0;
  double effective_samples = 0;
  double threshold_L = 0;
  double mean = 0;
  double variance = 0;         // of 2 L^{1/4} (pi(t) - pi(s))
  double target_variance = 0;  // |t - s| (1 - |t - s|)
  KsResult ks;

  nlohmann::json to_json() const;
};

IncrementReport two_point_increment(const ConditionedEnsemble& ensemble, double s, double t,
                                    int threads = default_threads());
IncrementReport two_point_increment(const PathPositions& positions, std::size_t i, std::size_t j);

struct TentReport {
  double threshold_L = 0;
  std::vector<double> x;
  std::vector<double> tent;          // L - 2 sqrt(L) |x|
  std::vector<double> mean_profile;  // weighted mean of h(x)
  std::vector<std::int64_t> replicates;
  std::vector<double> weights;
  std::vector<double> residuals;     // sup_x |h(x) - tent(x)| / L^{1/4}
  double median_residual = 0, q90_residual = 0;

  nlohmann::json to_json() const;
  /// replicate,weight,residual
  void write_csv(std::ostream& out) const;
};

/// h(x) is the rescaled value from (0, 0) to site_unbounded(x, 1). Needs a
/// finite threshold > 0 and |x| <= sqrt(L); x beyond the lattice is a range error.
TentReport tent_fit(const ConditionedEnsemble& ensemble, const std::vector<double>& x_grid,
                    int threads = default_threads());

struct CoalescenceReport {
  double threshold_L = 0;
  double halfwidth = 0;  // rescaled
  std::vector<std::int64_t> replicates;
  std::vector<double> weights;
  std::vector<double> defects;  // rescaled
  double zero_fraction = 0;     // weighted
  double median_defect = 0, q90_defect = 0;

  nlohmann::json to_json() const;
  /// replicate,weight,defect
  void write_csv(std::ostream& out) const;
};

/// Defect [G(-h -> 0) + G(0 -> h)] - [G(-h -> h) + G(0 -> 0)] between times 0
/// and 1, divided by the height scale, with h = window_fraction sqrt(L) and L
/// the reference (default: the ensemble's threshold). Rounding-level defects
/// at zero temperature are exactly 0.
CoalescenceReport coalescence(const ConditionedEnsemble& ensemble, double window_fraction,
                              std::optional<double> reference_L = std::nullopt, int threads = default_threads());

struct LocalizationReport {
  double threshold_L = 0;
  double s = 0;
  double M = 0;
  double halfwidth = 0;  // M L^{-1/2} log L, rescaled
  bool admissible = false;  // L^{-5/8} <= s <= 1 - L^{-5/8}
  bool window_covers_antidiagonal = false;  // no sample had a site outside
  std::vector<std::int64_t> replicates;
  std::vector<double> weights;
  std::vector<double> outside_mass;
  double fraction_below = 0;  // weighted fraction with outside mass < 0.01
  double median_mass = 0, q90_mass = 0;

  nlohmann::json to_json() const;
  /// replicate,weight,outside_mass
  void write_csv(std::ostream& out) const;
};

/// Positive temperature only. Needs threshold L > 1, s in (0, 1), M > 0.
LocalizationReport localization(const ConditionedEnsemble& ensemble, double s, double M,
                                int threads = default_threads());

struct ProportionalityReport {
  std::vector<double> times;  // 0, s_1, .., s_{k-1}, 1 as realized on the lattice
  double threshold_L = 0;
  std::int64_t considered = 0;
  std::vector<std::int64_t> replicates;  // kept: L_total > threshold
  std::vector<double> weights;           // renormalized over kept
  std::vector<double> total;             // L_total
  Eigen::MatrixXd energies;              // kept x k, rescaled E_j
  Eigen::MatrixXd deviations;            // kept x k
  std::vector<double> q95_abs_deviation; // per segment

  nlohmann::json to_json() const;
  /// replicate,weight,total,E_1..E_k,dev_1..dev_k
  void write_csv(std::ostream& out) const;
};

/// Segment energies E_j along the best path pinned at site_of(0, s_j); the
/// pinned sites are counted once, so sum E_j = L_total. Deviation j is
/// (E_j - ds_j L) / (ds_j^{1/2} L^{1/4}) with L the ensemble threshold, so
/// sum_j ds_j^{1/2} dev_j = (L_total - L) / L^{1/4}. Samples with
/// L_total <= L are dropped. Without interior times there are no segment
/// columns.
ProportionalityReport proportionality(const ConditionedEnsemble& ensemble, const std::vector<double>& interior_times,
                                      int threads = default_threads());

struct EndpointPair {
  double x = 0;  // start, time 0
  double y = 0;  // end, time 1

  friend bool operator==(const EndpointPair&, const EndpointPair&) = default;
};

struct ShiftInvarianceReport {
  std::vector<EndpointPair> family, shifted;
  std::int64_t replicates = 0;
  bool common_random_numbers = false;
  Eigen::MatrixXd original, moved;  // replicates x pairs, rescaled
  std::vector<KsResult> per_pair;
  KsResult joint_sum;

  nlohmann::json to_json() const;
  /// replicate,family,value_1..value_m,sum
  void write_csv(std::ostream& out) const;
};

/// x_1 <= .. <= x_m and y_1 >= .. >= y_m in both families, with equal
/// differences x_i - y_i; otherwise a parameter error. The end site is the
/// lattice start plus the lattice image of y - x, so equal differences stay
/// equal on the lattice. The shifted family runs
/// on a separate seed stream unless common_random_numbers.
ShiftInvarianceReport shift_invariance(const Model& model, const ScalingMap& map,
                                       const std::vector<EndpointPair>& family,
                                       const std::vector<EndpointPair>& shifted, std::uint64_t seed,
                                       std::int64_t replicates, bool common_random_numbers = false,
                                       int threads = default_threads());

struct MechanismResult {
  double exact_ratio = 1;
  double leading_term = 1;
};

/// Q((L + delta - mu) / sigma) / Q((L - mu) / sigma), mu = -L + 2 sqrt(L) M,
/// sigma^2 = sqrt(L) - M; leading term exp(-2 delta sqrt(L)).
MechanismResult gaussian_bridge_mechanism(double L, double delta, double M);

/// Lattice column minus row of the (0, 0) -> (n-1, n-1) geodesic on the
/// middle antidiagonal, for replicates 0 .. replicates-1 (zero temperature).
std::vector<double> midpoint_displacement(const Model& model, std::int64_t n, std::int64_t replicates,
                                          std::uint64_t seed, int threads = default_threads());

nlohmann::json to_json(const KsResult& ks);

}  // namespace kpz
