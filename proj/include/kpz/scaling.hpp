#pragma once

#include "kpz/core.hpp"
#include "kpz/fit.hpp"
#include "kpz/model.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace kpz {

/// GUE Tracy-Widom reference values (Fredholm determinant quadrature).
namespace tracy_widom {
inline constexpr double mean = -1.7710868074;
inline constexpr double variance = 0.8131947928;
inline constexpr double median = -1.80491241;
inline constexpr double lower_quartile = -2.39489868;
inline constexpr double upper_quartile = -1.18387290;
inline constexpr double iqr = upper_quartile - lower_quartile;

/// Leading upper-tail asymptotic (32 pi)^-1 L^-3/2 exp(-4/3 L^3/2).
double tail_asymptotic(double L);
}  // namespace tracy_widom

enum class ScalingMode { exact_exponential, calibrated };

/// Lattice <-> rescaled coordinates for the n x n core, (0, 0) at s = 0 and
/// (n-1, n-1) at s = 1. Height: h = (raw - c) / sigma_h. Space: x is column
/// minus row divided by sigma_x.
class ScalingMap {
 public:
  static ScalingMap exact_exponential(std::int64_t n);
  static ScalingMap calibrated(std::int64_t n, double center, double height_scale, double space_scale);

  std::int64_t n() const { return n_; }
  double center() const { return center_; }
  double height_scale() const { return height_scale_; }
  double space_scale() const { return space_scale_; }
  ScalingMode mode() const { return mode_; }

  double to_rescaled(double raw) const { return (raw - center_) / height_scale_; }
  double to_raw(double h) const { return center_ + h * height_scale_; }

  /// round(s (2n - 2)).
  std::int64_t antidiagonal(double s) const;
  /// Column minus row nearest x sigma_x with the parity of antidiagonal d.
  std::int64_t transversal(double x, std::int64_t d) const;
  /// Site for (x, s); may lie outside the core (padded windows).
  Site site_unbounded(double x, double s) const;
  /// As site_unbounded, with a range error outside the core.
  Site site_of(double x, double s) const;

  double x_of(Site s) const { return double(s.col - s.row) / space_scale_; }
  double s_of(Site s) const { return n_ == 1 ? 0.0 : double(s.antidiagonal()) / double(2 * n_ - 2); }

  nlohmann::json to_json() const;
  static ScalingMap from_json(const nlohmann::json& j);

 private:
  ScalingMap(std::int64_t n, double c, double sh, double sx, ScalingMode mode)
      : n_(n), center_(c), height_scale_(sh), space_scale_(sx), mode_(mode) {}

  std::int64_t n_ = 1;
  double center_ = 0, height_scale_ = 1, space_scale_ = 1;
  ScalingMode mode_ = ScalingMode::exact_exponential;
};

/// Site with column minus row m on antidiagonal d (m and d of equal parity).
constexpr Site site_on(std::int64_t d, std::int64_t m) { return {(d - m) / 2, (d + m) / 2}; }

struct CalibrationEntry {
  std::int64_t n = 0;
  std::int64_t replicates = 0;
  double median = 0, iqr = 0;  // of the raw terminal value
  double c = 0;                // median shifted to the Tracy-Widom median
  double sigma_h = 0;          // iqr / Tracy-Widom iqr
  double sigma_x = 0;          // from the curvature of the mean profile
  double curvature = 0;        // fitted coefficient of m^2 (raw units)
};

struct CalibrationReport {
  std::string model;
  std::vector<CalibrationEntry> entries;
  LinearFit height_exponent;  // log sigma_h vs log n
  LinearFit space_exponent;   // log sigma_x vs log n (needs 3+ sizes)

  const CalibrationEntry& at(std::int64_t n) const;
  ScalingMap map(std::int64_t n) const;
  nlohmann::json to_json() const;
  static CalibrationReport from_json(const nlohmann::json& j);
};

/// Empirical centering and scales for each n from `replicates` streamed
/// replicates (profile padding ~ the exact-mode sigma_x / 2).
CalibrationReport calibrate(const Model& model, const std::vector<std::int64_t>& n_list, std::int64_t replicates,
                            std::uint64_t seed, int threads);

struct ShearPairs {
  double nu = 0;
  double correction = 0;          // 2 nu (y - x) + nu^2 (t - s), rescaled
  std::vector<double> original;   // h(x, 0; y, 1)
  std::vector<double> sheared;    // h(x, 0; y + nu, 1) + correction
};

/// Shear correction for start x at time s and end y at time t.
constexpr double shear_correction(double nu, double x, double y, double s, double t) {
  return 2 * nu * (y - x) + nu * nu * (t - s);
}

/// Per replicate, the rescaled passage x -> y and the corrected passage
/// x -> y + nu over one unit of time, on the same environment.
ShearPairs shear_pair(const ScalingMap& map, const Model& model, double nu, double x, double y,
                      std::int64_t replicates, std::uint64_t seed, int threads);

}  // namespace kpz
