#include "kpz/scaling.hpp"

#include "kpz/parallel.hpp"
#include "kpz/stream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace kpz {

double tracy_widom::tail_asymptotic(double L) {
  return std::pow(L, -1.5) * std::exp(-4.0 / 3.0 * std::pow(L, 1.5)) / (32 * std::numbers::pi);
}

ScalingMap ScalingMap::exact_exponential(std::int64_t n) {
  require(n >= 1, ErrorKind::parameter, "lattice size must be >= 1");
  const double nd = double(n);
  return ScalingMap(n, 4 * nd, std::cbrt(16 * nd), std::cbrt(32 * nd * nd), ScalingMode::exact_exponential);
}

ScalingMap ScalingMap::calibrated(std::int64_t n, double center, double height_scale, double space_scale) {
  require(n >= 1, ErrorKind::parameter, "lattice size must be >= 1");
  require(height_scale > 0 && space_scale > 0 && std::isfinite(center), ErrorKind::parameter,
          "calibrated scales must be positive");
  return ScalingMap(n, center, height_scale, space_scale, ScalingMode::calibrated);
}

std::int64_t ScalingMap::antidiagonal(double s) const {
  return static_cast<std::int64_t>(std::llround(s * double(2 * n_ - 2)));
}

std::int64_t ScalingMap::transversal(double x, std::int64_t d) const {
  const double v = x * space_scale_;
  const double mag = std::abs(v);
  std::int64_t m;
  if (d % 2 == 0) m = 2 * std::llround(mag / 2);
  else m = 2 * static_cast<std::int64_t>(std::floor(mag / 2)) + 1;
  return v < 0 ? -m : m;
}

Site ScalingMap::site_unbounded(double x, double s) const {
  const std::int64_t d = antidiagonal(s);
  return site_on(d, transversal(x, d));
}

Site ScalingMap::site_of(double x, double s) const {
  require(s >= 0 && s <= 1, ErrorKind::range, "rescaled time must lie in [0, 1]");
  const Site site = site_unbounded(x, s);
  require(site.row >= 0 && site.col >= 0 && site.row < n_ && site.col < n_, ErrorKind::range,
          "rescaled point maps outside the lattice");
  return site;
}

nlohmann::json ScalingMap::to_json() const {
  return {{"n", n_},
          {"mode", mode_ == ScalingMode::exact_exponential ? "exact-exponential" : "calibrated"},
          {"c", center_},
          {"sigma_h", height_scale_},
          {"sigma_x", space_scale_}};
}

ScalingMap ScalingMap::from_json(const nlohmann::json& j) {
  const auto n = j.at("n").get<std::int64_t>();
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "exact-exponential") return exact_exponential(n);
  require(mode == "calibrated", ErrorKind::parameter, "unknown scaling mode '" + mode + "'");
  return calibrated(n, j.at("c").get<double>(), j.at("sigma_h").get<double>(), j.at("sigma_x").get<double>());
}

const CalibrationEntry& CalibrationReport::at(std::int64_t n) const {
  for (const auto& e : entries)
    if (e.n == n) return e;
  fail(ErrorKind::parameter, "calibration has no entry for n = " + std::to_string(n));
}

ScalingMap CalibrationReport::map(std::int64_t n) const {
  const auto& e = at(n);
  return ScalingMap::calibrated(n, e.c, e.sigma_h, e.sigma_x);
}

nlohmann::json CalibrationReport::to_json() const {
  nlohmann::json j;
  j["model"] = model;
  for (const char* key : {"n", "c", "sigma_h", "sigma_x", "median", "iqr", "replicates"}) j[key] = nlohmann::json::array();
  for (const auto& e : entries) {
    j["n"].push_back(e.n);
    j["c"].push_back(e.c);
    j["sigma_h"].push_back(e.sigma_h);
    j["sigma_x"].push_back(e.sigma_x);
    j["median"].push_back(e.median);
    j["iqr"].push_back(e.iqr);
    j["replicates"].push_back(e.replicates);
  }
  j["exponent"] = height_exponent.slope;
  j["stderr"] = height_exponent.slope_stderr;
  j["space_exponent"] = space_exponent.slope;
  j["space_stderr"] = space_exponent.slope_stderr;
  return j;
}

CalibrationReport CalibrationReport::from_json(const nlohmann::json& j) {
  CalibrationReport r;
  r.model = j.at("model").get<std::string>();
  const auto& ns = j.at("n");
  for (std::size_t k = 0; k < ns.size(); ++k) {
    CalibrationEntry e;
    e.n = ns[k].get<std::int64_t>();
    e.c = j.at("c")[k].get<double>();
    e.sigma_h = j.at("sigma_h")[k].get<double>();
    e.sigma_x = j.at("sigma_x")[k].get<double>();
    e.median = j.value("median", nlohmann::json::array()).size() > k ? j["median"][k].get<double>() : 0.0;
    e.iqr = j.value("iqr", nlohmann::json::array()).size() > k ? j["iqr"][k].get<double>() : 0.0;
    r.entries.push_back(e);
  }
  r.height_exponent.slope = j.value("exponent", 0.0);
  r.height_exponent.slope_stderr = j.value("stderr", 0.0);
  r.space_exponent.slope = j.value("space_exponent", 0.0);
  r.space_exponent.slope_stderr = j.value("space_stderr", 0.0);
  return r;
}

namespace {

// Type-7 sample quantile of sorted data.
double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

}  // namespace

CalibrationReport calibrate(const Model& model, const std::vector<std::int64_t>& n_list, std::int64_t replicates,
                            std::uint64_t seed, int threads) {
  model.validate();
  require(!n_list.empty(), ErrorKind::parameter, "calibration needs at least one size");
  require(std::is_sorted(n_list.begin(), n_list.end()) &&
              std::adjacent_find(n_list.begin(), n_list.end()) == n_list.end(),
          ErrorKind::parameter, "calibration sizes must be strictly ascending");
  require(replicates >= 1000, ErrorKind::parameter, "calibration needs at least 1000 replicates");

  CalibrationReport report;
  report.model = model.name();
  for (const std::int64_t n : n_list) {
    require(n >= 8, ErrorKind::parameter, "calibration sizes must be >= 8");
    const CellLaw law = model.law(n);
    const std::int64_t pad =
        std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(std::ceil(std::cbrt(4.0 * double(n) * double(n)))));
    const std::uint64_t size_seed = replicate_seed(seed, std::uint64_t(n));

    std::vector<std::vector<double>> profiles(replicates);
    parallel_for(replicates, threads, [&](std::int64_t r) {
      profiles[r] = stream_profile(law, model.beta, n, pad, replicate_seed(size_seed, std::uint64_t(r)));
    });

    std::vector<double> terminal(replicates);
    std::vector<double> mean(2 * pad + 1, 0.0);
    for (std::int64_t r = 0; r < replicates; ++r) {
      terminal[r] = profiles[r][pad];
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += profiles[r][k];
    }
    for (double& v : mean) v /= double(replicates);
    std::sort(terminal.begin(), terminal.end());

    CalibrationEntry e;
    e.n = n;
    e.replicates = replicates;
    e.median = quantile_sorted(terminal, 0.5);
    e.iqr = quantile_sorted(terminal, 0.75) - quantile_sorted(terminal, 0.25);
    e.sigma_h = e.iqr / tracy_widom::iqr;
    e.c = e.median - e.sigma_h * tracy_widom::median;

    // Mean profile ~ alpha + a m^2 with m = col - row = -2k.
    Eigen::VectorXd m2(2 * pad + 1), y(2 * pad + 1);
    for (std::int64_t k = -pad; k <= pad; ++k) {
      m2[k + pad] = double(4 * k * k);
      y[k + pad] = mean[k + pad];
    }
    const LinearFit fit = least_squares(m2, y);
    e.curvature = fit.slope;
    require(fit.slope < 0, ErrorKind::insufficient_data, "mean profile is not concave; too few replicates");
    e.sigma_x = std::sqrt(e.sigma_h / -fit.slope);
    report.entries.push_back(e);
  }

  if (report.entries.size() >= 2) {
    Eigen::VectorXd ln(report.entries.size()), lh(report.entries.size()), lx(report.entries.size());
    for (std::size_t k = 0; k < report.entries.size(); ++k) {
      ln[k] = std::log(double(report.entries[k].n));
      lh[k] = std::log(report.entries[k].sigma_h);
      lx[k] = std::log(report.entries[k].sigma_x);
    }
    report.height_exponent = least_squares(ln, lh);
    report.space_exponent = least_squares(ln, lx);
  }
  return report;
}

ShearPairs shear_pair(const ScalingMap& map, const Model& model, double nu, double x, double y,
                      std::int64_t replicates, std::uint64_t seed, int threads) {
  model.validate();
  require(replicates >= 1, ErrorKind::parameter, "replicates must be >= 1");
  const std::int64_t n = map.n();
  const Site a = map.site_unbounded(x, 0.0);
  const Site b = map.site_unbounded(y, 1.0);
  const Site b_shear = map.site_unbounded(y + nu, 1.0);
  // Allow a margin of n cells around the core; beyond that the probe is out of range.
  for (const Site& s : {a, b, b_shear})
    require(std::abs(s.col - s.row) <= n, ErrorKind::range, "sheared probe maps too far outside the lattice");
  require(reachable(a, b) && reachable(a, b_shear), ErrorKind::range, "probe endpoints are not ordered");

  ShearPairs out;
  out.nu = nu;
  out.correction = shear_correction(nu, x, y, 0.0, 1.0);
  out.original.resize(replicates);
  out.sheared.resize(replicates);
  const CellLaw law = model.law(n);
  const std::int64_t d = b.antidiagonal();
  const std::int64_t m0 = b.col - b.row, m1 = b_shear.col - b_shear.row;
  parallel_for(replicates, threads, [&](std::int64_t r) {
    const auto s = replicate_seed(seed, std::uint64_t(r));
    const auto v = stream_antidiagonal(law, model.beta, a, d, std::min(m0, m1), std::max(m0, m1), s);
    const double orig = v[m0 <= m1 ? 0 : v.size() - 1];
    const double shr = v[m0 <= m1 ? v.size() - 1 : 0];
    out.original[r] = map.to_rescaled(orig);
    out.sheared[r] = map.to_rescaled(shr) + out.correction;
  });
  return out;
}

}  // namespace kpz
