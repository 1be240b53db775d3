#include "kpz/stats.hpp"

#include "kpz/io.hpp"
#include "kpz/lpp.hpp"
#include "kpz/polymer.hpp"
#include "kpz/stream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

namespace kpz {

using nlohmann::json;

namespace {

constexpr std::int64_t kMinBridgeSamples = 200;
constexpr std::uint64_t kShiftedStream = 0x7368696674;

void require_threshold(double L, const char* what) {
  require(std::isfinite(L) && L > 0, ErrorKind::parameter, std::string(what) + " needs a finite threshold L > 0");
}

std::vector<double> uniform_weights(std::size_t n) { return std::vector<double>(n, n ? 1.0 / double(n) : 0.0); }

double effective_size(const std::vector<double>& w) {
  double sq = 0;
  for (double v : w) sq += v * v;
  return sq > 0 ? 1.0 / sq : 0.0;
}

std::vector<double> renormalized(std::vector<double> w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;
  return w;
}

json quantile_json(const std::vector<double>& x, const std::vector<double>& w) {
  json j = json::object();
  if (x.empty()) return j;
  for (const auto& [name, q] : {std::pair{"q10", 0.1}, {"q50", 0.5}, {"q90", 0.9}, {"q95", 0.95}})
    j[name] = weighted_quantile(x, w, q);
  return j;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json j = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

// (0, 0) -> (n-1, n-1) path site on each antidiagonal.
std::vector<Site> path_sites(const ConditionedEnsemble& e, const std::vector<std::int64_t>& ds, std::uint64_t seed) {
  const std::int64_t n = e.n();
  const EnvGrid grid = stream_window(e.law, seed, {0, 0}, n, n);
  if (e.model.zero_temperature()) {
    const LatticePath path = backtrace(passage_field(grid.weights, Site{0, 0}), Site{n - 1, n - 1});
    std::vector<Site> out;
    for (const std::int64_t d : ds) out.push_back(path.at_antidiagonal(d));
    return out;
  }
  return backbone(path_ensemble(grid, e.model.beta, {0, 0}, {n - 1, n - 1}), ds);
}

Site lattice_end(const ScalingMap& map, double x, double s) {
  const Site site = map.site_unbounded(x, s);
  const std::int64_t span = 2 * map.n() - 2;
  require(std::abs(site.col - site.row) <= span, ErrorKind::range, "point lies beyond the lattice");
  return site;
}

}  // namespace

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0)) return 1.0;
  if (lambda < 1.0) {
    // Jacobi theta form of the cdf.
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double cdf = 0;
    for (int k = 1; k <= 50; ++k) {
      const double odd = 2.0 * k - 1.0;
      cdf += std::exp(-odd * odd * pi2 / (8 * lambda * lambda));
    }
    cdf *= std::sqrt(2 * std::numbers::pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2 * sum, 0.0, 1.0);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double log_normal_upper_tail(double z) {
  if (z < 30) return std::log(normal_upper_tail(z));
  const double z2 = z * z;
  const double series = 1 - 1 / z2 + 3 / (z2 * z2) - 15 / (z2 * z2 * z2) + 105 / (z2 * z2 * z2 * z2);
  return -0.5 * z2 - std::log(z * std::sqrt(2 * std::numbers::pi)) + std::log(series);
}

namespace {

double ks_p_value(double d, double ne) {
  if (ne <= 0) return 1.0;
  const double root = std::sqrt(ne);
  return kolmogorov_survival((root + 0.12 + 0.11 / root) * d);
}

}  // namespace

KsResult ks_normal(const std::vector<double>& x, const std::vector<double>& weights, double variance) {
  require(x.size() == weights.size(), ErrorKind::parameter, "values and weights differ in length");
  require(!x.empty(), ErrorKind::parameter, "KS needs at least one value");
  require(variance > 0 && std::isfinite(variance), ErrorKind::parameter, "variance must be finite and > 0");
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  const double sd = std::sqrt(variance);
  double cum = 0, d = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double v = x[order[k]];
    const double f = normal_cdf(v / sd);
    d = std::max(d, std::abs(f - cum));
    while (k < order.size() && x[order[k]] == v) cum += weights[order[k++]];
    d = std::max(d, std::abs(std::min(cum, 1.0) - f));
  }
  KsResult r;
  r.statistic = d;
  r.effective_n = effective_size(weights);
  r.p_value = ks_p_value(d, r.effective_n);
  return r;
}

KsResult ks_normal(const std::vector<double>& x, double variance) {
  return ks_normal(x, uniform_weights(x.size()), variance);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), ErrorKind::parameter, "KS needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = double(a.size()), nb = double(b.size());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(double(i) / na - double(j) / nb));
  }
  KsResult r;
  r.statistic = d;
  r.effective_n = na * nb / (na + nb);
  r.p_value = ks_p_value(d, r.effective_n);
  return r;
}

double weighted_quantile(const std::vector<double>& x, const std::vector<double>& weights, double q) {
  require(x.size() == weights.size() && !x.empty(), ErrorKind::parameter, "quantile needs matching nonempty inputs");
  require(q >= 0 && q <= 1, ErrorKind::parameter, "quantile level must lie in [0, 1]");
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double cum = 0;
  for (const std::size_t k : order) {
    cum += weights[k] / total;
    if (cum >= q - 1e-12) return x[k];
  }
  return x[order.back()];
}

double weighted_mean(const std::vector<double>& x, const std::vector<double>& weights) {
  require(x.size() == weights.size() && !x.empty(), ErrorKind::parameter, "mean needs matching nonempty inputs");
  double total = 0, acc = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    acc += weights[k] * x[k];
    total += weights[k];
  }
  return acc / total;
}

double weighted_covariance(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<double>& weights) {
  require(x.size() == y.size() && x.size() == weights.size(), ErrorKind::parameter, "inputs differ in length");
  require(x.size() >= 2, ErrorKind::insufficient_data, "covariance needs two values");
  const std::vector<double> w = renormalized(weights);
  const double mx = weighted_mean(x, w), my = weighted_mean(y, w);
  double acc = 0, sq = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    acc += w[k] * (x[k] - mx) * (y[k] - my);
    sq += w[k] * w[k];
  }
  require(sq < 1, ErrorKind::insufficient_data, "all weight on one sample");
  return acc / (1 - sq);
}

std::vector<double> PathPositions::column(std::size_t k) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = x(i, Eigen::Index(k));
  return out;
}

PathPositions path_positions(const ConditionedEnsemble& ensemble, const std::vector<double>& times, int threads) {
  for (const double s : times)
    require(s > 0 && s < 1, ErrorKind::parameter, "times must lie in (0, 1)");
  const ConditionedEnsemble e = ensemble.canonical();
  std::vector<std::int64_t> ds;
  for (const double s : times) ds.push_back(e.map.antidiagonal(s));
  PathPositions p;
  p.times = times;
  p.threshold_L = e.threshold_L;
  p.weights = e.normalized_weights();
  p.effective_samples = effective_size(p.weights);
  p.x.resize(Eigen::Index(e.size()), Eigen::Index(times.size()));
  for (const auto& s : e.samples) p.replicates.push_back(s.replicate);
  parallel_for(std::int64_t(e.size()), threads, [&](std::int64_t i) {
    const auto sites = path_sites(e, ds, e.seed_of(e.samples[i]));
    for (std::size_t k = 0; k < sites.size(); ++k) p.x(i, Eigen::Index(k)) = e.map.x_of(sites[k]);
  });
  return p;
}

Eigen::MatrixXd bridge_covariance(const std::vector<double>& times) {
  const auto k = Eigen::Index(times.size());
  Eigen::MatrixXd c(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      const double lo = std::min(times[i], times[j]), hi = std::max(times[i], times[j]);
      c(i, j) = lo * (1 - hi);
    }
  return c;
}

BridgeFddReport bridge_fdd(const PathPositions& p) {
  require_threshold(p.threshold_L, "bridge_fdd");
  const auto count = std::int64_t(p.x.rows());
  if (count < kMinBridgeSamples)
    throw InsufficientData("bridge_fdd needs " + std::to_string(kMinBridgeSamples) + " samples, got " +
                               std::to_string(count),
                           double(count));
  BridgeFddReport r;
  r.times = p.times;
  r.samples = count;
  r.effective_samples = p.effective_samples;
  r.threshold_L = p.threshold_L;
  r.scale = 2 * std::pow(p.threshold_L, 0.25);
  r.positions = p;
  const auto k = p.times.size();
  std::vector<std::vector<double>> scaled(k);
  for (std::size_t i = 0; i < k; ++i) {
    scaled[i] = p.column(i);
    r.raw_variance.push_back(weighted_covariance(scaled[i], scaled[i], p.weights));
    for (double& v : scaled[i]) v *= r.scale;
  }
  r.mean.resize(Eigen::Index(k));
  r.covariance.resize(Eigen::Index(k), Eigen::Index(k));
  for (std::size_t i = 0; i < k; ++i) {
    r.mean(Eigen::Index(i)) = weighted_mean(scaled[i], p.weights);
    for (std::size_t j = 0; j <= i; ++j)
      r.covariance(Eigen::Index(i), Eigen::Index(j)) = r.covariance(Eigen::Index(j), Eigen::Index(i)) =
          weighted_covariance(scaled[i], scaled[j], p.weights);
  }
  r.target_covariance = bridge_covariance(p.times);
  for (std::size_t i = 0; i < k; ++i) r.ks.push_back(ks_normal(scaled[i], p.weights, p.times[i] * (1 - p.times[i])));
  return r;
}

BridgeFddReport bridge_fdd(const ConditionedEnsemble& ensemble, const std::vector<double>& times, int threads) {
  require_threshold(ensemble.threshold_L, "bridge_fdd");
  if (std::int64_t(ensemble.size()) < kMinBridgeSamples)
    throw InsufficientData("bridge_fdd needs " + std::to_string(kMinBridgeSamples) + " samples, got " +
                               std::to_string(ensemble.size()),
                           double(ensemble.size()));
  return bridge_fdd(path_positions(ensemble, times, threads));
}

json to_json(const KsResult& ks) {
  return {{"statistic", ks.statistic}, {"effective_n", ks.effective_n}, {"p_value", ks.p_value}};
}

json BridgeFddReport::to_json() const {
  json ks_json = json::array();
  for (const auto& k : ks) ks_json.push_back(kpz::to_json(k));
  std::vector<double> var, target;
  for (std::size_t k = 0; k < times.size(); ++k) {
    var.push_back(variance(k));
    target.push_back(target_variance(k));
  }
  return {{"report", "bridge_fdd"},
          {"times", times},
          {"samples", samples},
          {"effective_samples", effective_samples},
          {"threshold_L", json_real(threshold_L)},
          {"scale", scale},
          {"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"covariance", matrix_json(covariance)},
          {"target_covariance", matrix_json(target_covariance)},
          {"variance", var},
          {"target_variance", target},
          {"raw_variance", raw_variance},
          {"ks", ks_json}};
}

void BridgeFddReport::write_csv(std::ostream& out) const {
  out << "replicate,weight";
  for (std::size_t k = 0; k < times.size(); ++k) out << ",pi_" << k + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < positions.x.rows(); ++i) {
    out << positions.replicates[i] << ',' << fmt17(positions.weights[i]);
    for (Eigen::Index k = 0; k < positions.x.cols(); ++k) out << ',' << fmt17(positions.x(i, k));
    out << '\n';
  }
}

IncrementReport two_point_increment(const PathPositions& p, std::size_t i, std::size_t j) {
  require_threshold(p.threshold_L, "two_point_increment");
  require(i < p.times.size() && j < p.times.size(), ErrorKind::parameter, "time index out of range");
  const auto count = std::int64_t(p.x.rows());
  if (count < kMinBridgeSamples)
    throw InsufficientData("two_point_increment needs " + std::to_string(kMinBridgeSamples) + " samples",
                           double(count));
  IncrementReport r;
  r.s = p.times[i];
  r.t = p.times[j];
  r.samples = count;
  r.effective_samples = p.effective_samples;
  r.threshold_L = p.threshold_L;
  const double scale = 2 * std::pow(p.threshold_L, 0.25);
  std::vector<double> diff(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k)
    diff[k] = scale * (p.x(k, Eigen::Index(j)) - p.x(k, Eigen::Index(i)));
  const double gap = std::abs(r.t - r.s);
  r.target_variance = gap * (1 - gap);
  r.mean = weighted_mean(diff, p.weights);
  r.variance = weighted_covariance(diff, diff, p.weights);
  if (r.target_variance > 0) r.ks = ks_normal(diff, p.weights, r.target_variance);
  r.ks.effective_n = p.effective_samples;
  return r;
}

IncrementReport two_point_increment(const ConditionedEnsemble& ensemble, double s, double t, int threads) {
  require_threshold(ensemble.threshold_L, "two_point_increment");
  if (std::int64_t(ensemble.size()) < kMinBridgeSamples)
    throw InsufficientData("two_point_increment needs " + std::to_string(kMinBridgeSamples) + " samples",
                           double(ensemble.size()));
  if (s == t) return two_point_increment(path_positions(ensemble, {s}, threads), 0, 0);
  return two_point_increment(path_positions(ensemble, {s, t}, threads), 0, 1);
}

json IncrementReport::to_json() const {
  return {{"report", "two_point_increment"},
          {"s", s},
          {"t", t},
          {"samples", samples},
          {"effective_samples", effective_samples},
          {"threshold_L", json_real(threshold_L)},
          {"mean", mean},
          {"variance", variance},
          {"target_variance", target_variance},
          {"ks", kpz::to_json(ks)}};
}

TentReport tent_fit(const ConditionedEnsemble& ensemble, const std::vector<double>& x_grid, int threads) {
  const double L = ensemble.threshold_L;
  require_threshold(L, "tent_fit");
  require(!x_grid.empty(), ErrorKind::parameter, "tent grid is empty");
  const ConditionedEnsemble e = ensemble.canonical();
  const std::int64_t n = e.n();
  const std::int64_t d = 2 * n - 2;
  std::vector<std::int64_t> ms;
  for (const double x : x_grid) {
    require(std::abs(x) <= std::sqrt(L) * (1 + 1e-12), ErrorKind::parameter, "tent grid must satisfy |x| <= sqrt(L)");
    ms.push_back(lattice_end(e.map, x, 1.0).col - lattice_end(e.map, x, 1.0).row);
  }
  const auto [lo_it, hi_it] = std::minmax_element(ms.begin(), ms.end());
  const std::int64_t m_lo = *lo_it, m_hi = *hi_it;

  TentReport r;
  r.threshold_L = L;
  r.x = x_grid;
  for (const double x : x_grid) r.tent.push_back(L - 2 * std::sqrt(L) * std::abs(x));
  r.weights = e.normalized_weights();
  for (const auto& s : e.samples) r.replicates.push_back(s.replicate);
  r.residuals.assign(e.size(), 0.0);
  Eigen::MatrixXd h(Eigen::Index(e.size()), Eigen::Index(x_grid.size()));
  const double scale = std::pow(L, 0.25);
  parallel_for(std::int64_t(e.size()), threads, [&](std::int64_t i) {
    const auto values = stream_antidiagonal(e.law, e.model.beta, {0, 0}, d, m_lo, m_hi, e.seed_of(e.samples[i]));
    double worst = 0;
    for (std::size_t k = 0; k < ms.size(); ++k) {
      const double v = e.map.to_rescaled(values[(ms[k] - m_lo) / 2]);
      h(i, Eigen::Index(k)) = v;
      worst = std::max(worst, std::abs(v - r.tent[k]) / scale);
    }
    r.residuals[i] = worst;
  });
  for (std::size_t k = 0; k < ms.size(); ++k) {
    double acc = 0;
    for (Eigen::Index i = 0; i < h.rows(); ++i) acc += r.weights[i] * h(i, Eigen::Index(k));
    r.mean_profile.push_back(acc);
  }
  if (!r.residuals.empty()) {
    r.median_residual = weighted_quantile(r.residuals, r.weights, 0.5);
    r.q90_residual = weighted_quantile(r.residuals, r.weights, 0.9);
  }
  return r;
}

json TentReport::to_json() const {
  return {{"report", "tent_fit"},
          {"threshold_L", json_real(threshold_L)},
          {"samples", residuals.size()},
          {"effective_samples", effective_size(weights)},
          {"x", x},
          {"tent", tent},
          {"mean_profile", mean_profile},
          {"median_residual", median_residual},
          {"q90_residual", q90_residual},
          {"residual_quantiles", quantile_json(residuals, weights)}};
}

void TentReport::write_csv(std::ostream& out) const {
  out << "replicate,weight,residual\n";
  for (std::size_t i = 0; i < residuals.size(); ++i)
    out << replicates[i] << ',' << fmt17(weights[i]) << ',' << fmt17(residuals[i]) << '\n';
}

CoalescenceReport coalescence(const ConditionedEnsemble& ensemble, double window_fraction,
                              std::optional<double> reference_L, int threads) {
  const double L = reference_L.value_or(ensemble.threshold_L);
  require_threshold(L, "coalescence");
  require(window_fraction >= 0 && std::isfinite(window_fraction), ErrorKind::parameter,
          "window fraction must be finite and >= 0");
  const ConditionedEnsemble e = ensemble.canonical();
  const std::int64_t n = e.n();
  const double h = window_fraction * std::sqrt(L);
  const Site x1 = lattice_end(e.map, -h, 0.0), x2{0, 0};
  const Site y1{n - 1, n - 1}, y2 = lattice_end(e.map, h, 1.0);
  for (const auto& [a, b] : {std::pair{x1, y1}, std::pair{x2, y2}, std::pair{x1, y2}, std::pair{x2, y1}})
    require(reachable(a, b), ErrorKind::range, "coalescence window does not fit the lattice");

  CoalescenceReport r;
  r.threshold_L = e.threshold_L;
  r.halfwidth = h;
  r.weights = e.normalized_weights();
  for (const auto& s : e.samples) r.replicates.push_back(s.replicate);
  r.defects.assign(e.size(), 0.0);
  const double beta = e.model.beta;
  parallel_for(std::int64_t(e.size()), threads, [&](std::int64_t i) {
    const std::uint64_t seed = e.seed_of(e.samples[i]);
    auto g = [&](Site a, Site b) { return stream_point_to_point(e.law, beta, a, b, seed).value; };
    const double straight = g(x1, y1) + g(x2, y2);
    const double crossing = g(x1, y2) + g(x2, y1);
    r.defects[i] = snap_defect(straight, crossing) / e.map.height_scale();
  });
  for (std::size_t i = 0; i < r.defects.size(); ++i)
    if (r.defects[i] == 0) r.zero_fraction += r.weights[i];
  if (!r.defects.empty()) {
    r.median_defect = weighted_quantile(r.defects, r.weights, 0.5);
    r.q90_defect = weighted_quantile(r.defects, r.weights, 0.9);
  }
  return r;
}

json CoalescenceReport::to_json() const {
  return {{"report", "coalescence"},
          {"threshold_L", json_real(threshold_L)},
          {"halfwidth", halfwidth},
          {"samples", defects.size()},
          {"effective_samples", effective_size(weights)},
          {"zero_fraction", zero_fraction},
          {"median_defect", median_defect},
          {"q90_defect", q90_defect},
          {"defect_quantiles", quantile_json(defects, weights)}};
}

void CoalescenceReport::write_csv(std::ostream& out) const {
  out << "replicate,weight,defect\n";
  for (std::size_t i = 0; i < defects.size(); ++i)
    out << replicates[i] << ',' << fmt17(weights[i]) << ',' << fmt17(defects[i]) << '\n';
}

LocalizationReport localization(const ConditionedEnsemble& ensemble, double s, double M, int threads) {
  require(!ensemble.model.zero_temperature(), ErrorKind::parameter, "localization needs a positive temperature");
  const double L = ensemble.threshold_L;
  require(std::isfinite(L) && L > 1, ErrorKind::parameter, "localization needs a finite threshold L > 1");
  require(s > 0 && s < 1, ErrorKind::parameter, "s must lie in (0, 1)");
  require(M > 0 && std::isfinite(M), ErrorKind::parameter, "M must be finite and > 0");
  const ConditionedEnsemble e = ensemble.canonical();
  const std::int64_t n = e.n();
  const std::int64_t d = e.map.antidiagonal(s);
  require(d > 0 && d < 2 * n - 2, ErrorKind::range, "s maps onto an endpoint antidiagonal");

  LocalizationReport r;
  r.threshold_L = L;
  r.s = s;
  r.M = M;
  r.halfwidth = M * std::log(L) / std::sqrt(L);
  const double edge = std::pow(L, -0.625);
  r.admissible = s >= edge && s <= 1 - edge;
  r.weights = e.normalized_weights();
  for (const auto& smp : e.samples) r.replicates.push_back(smp.replicate);
  r.outside_mass.assign(e.size(), 0.0);
  std::vector<char> any_outside(e.size(), 0);
  parallel_for(std::int64_t(e.size()), threads, [&](std::int64_t i) {
    const EnvGrid grid = stream_window(e.law, e.seed_of(e.samples[i]), {0, 0}, n, n);
    const PathEnsemble pe = path_ensemble(grid, e.model.beta, {0, 0}, {n - 1, n - 1});
    const double centre = e.map.x_of(backbone(pe, {d}).front());
    const QuenchedMarginal qm = quenched_marginal(pe, d);
    double mass = 0;
    for (std::size_t k = 0; k < qm.sites.size(); ++k)
      if (std::abs(e.map.x_of(qm.sites[k]) - centre) > r.halfwidth) {
        mass += qm.mass[k];
        any_outside[i] = 1;
      }
    r.outside_mass[i] = std::clamp(mass, 0.0, 1.0);
  });
  r.window_covers_antidiagonal = std::none_of(any_outside.begin(), any_outside.end(), [](char c) { return c; });
  for (std::size_t i = 0; i < r.outside_mass.size(); ++i)
    if (r.outside_mass[i] < 0.01) r.fraction_below += r.weights[i];
  if (!r.outside_mass.empty()) {
    r.median_mass = weighted_quantile(r.outside_mass, r.weights, 0.5);
    r.q90_mass = weighted_quantile(r.outside_mass, r.weights, 0.9);
  }
  return r;
}

json LocalizationReport::to_json() const {
  return {{"report", "localization"},
          {"threshold_L", json_real(threshold_L)},
          {"s", s},
          {"M", M},
          {"halfwidth", halfwidth},
          {"admissible", admissible},
          {"window_covers_antidiagonal", window_covers_antidiagonal},
          {"samples", outside_mass.size()},
          {"effective_samples", effective_size(weights)},
          {"fraction_below_0.01", fraction_below},
          {"median_mass", median_mass},
          {"q90_mass", q90_mass},
          {"mass_quantiles", quantile_json(outside_mass, weights)}};
}

void LocalizationReport::write_csv(std::ostream& out) const {
  out << "replicate,weight,outside_mass\n";
  for (std::size_t i = 0; i < outside_mass.size(); ++i)
    out << replicates[i] << ',' << fmt17(weights[i]) << ',' << fmt17(outside_mass[i]) << '\n';
}

ProportionalityReport proportionality(const ConditionedEnsemble& ensemble, const std::vector<double>& interior_times,
                                      int threads) {
  const double L = ensemble.threshold_L;
  require_threshold(L, "proportionality");
  const ConditionedEnsemble e = ensemble.canonical();
  const std::int64_t n = e.n();
  std::vector<Site> pins{{0, 0}};
  for (const double s : interior_times) {
    require(s > 0 && s < 1, ErrorKind::parameter, "times must lie in (0, 1)");
    pins.push_back(e.map.site_of(0.0, s));
  }
  pins.push_back({n - 1, n - 1});
  for (std::size_t j = 1; j < pins.size(); ++j)
    require(pins[j].antidiagonal() > pins[j - 1].antidiagonal() && reachable(pins[j - 1], pins[j]), ErrorKind::range,
            "pinned sites must be strictly ordered on the lattice");
  const std::size_t k = pins.size() - 1;

  ProportionalityReport r;
  r.threshold_L = L;
  r.considered = std::int64_t(e.size());
  for (const Site& p : pins) r.times.push_back(e.map.s_of(p));
  const bool lpp = e.model.zero_temperature();
  const double beta = e.model.beta;
  Eigen::MatrixXd energy(Eigen::Index(e.size()), Eigen::Index(k));
  parallel_for(std::int64_t(e.size()), threads, [&](std::int64_t i) {
    const EnvGrid grid = stream_window(e.law, e.seed_of(e.samples[i]), {0, 0}, n, n);
    for (std::size_t j = 1; j <= k; ++j) {
      const Site a = pins[j - 1], b = pins[j];
      const auto block = grid.weights.block(a.row, a.col, b.row - a.row + 1, b.col - a.col + 1);
      const Site end{b.row - a.row, b.col - a.col};
      double g = lpp ? passage_field(block, Site{0, 0})(end) : log_partition_field(block, beta, Site{0, 0})(end);
      if (j > 1) g -= lpp ? grid.weights(a.row, a.col) : beta * grid.weights(a.row, a.col);
      const double ds = r.times[j] - r.times[j - 1];
      energy(i, Eigen::Index(j - 1)) = (g - ds * e.map.center()) / e.map.height_scale();
    }
  });

  std::vector<double> raw_weights = e.normalized_weights();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double total = energy.row(Eigen::Index(i)).sum();
    if (total > L) {
      kept.push_back(i);
      r.total.push_back(total);
      r.replicates.push_back(e.samples[i].replicate);
      r.weights.push_back(raw_weights[i]);
    }
  }
  if (kept.empty()) throw InsufficientData("no sample has a pinned path above the threshold", 0.0);
  r.weights = renormalized(r.weights);
  const std::size_t cols = interior_times.empty() ? 0 : k;
  r.energies.resize(Eigen::Index(kept.size()), Eigen::Index(cols));
  r.deviations.resize(Eigen::Index(kept.size()), Eigen::Index(cols));
  const double scale = std::pow(L, 0.25);
  for (std::size_t row = 0; row < kept.size(); ++row)
    for (std::size_t j = 0; j < cols; ++j) {
      const double ds = r.times[j + 1] - r.times[j];
      const double ej = energy(Eigen::Index(kept[row]), Eigen::Index(j));
      r.energies(Eigen::Index(row), Eigen::Index(j)) = ej;
      r.deviations(Eigen::Index(row), Eigen::Index(j)) = (ej - ds * L) / (std::sqrt(ds) * scale);
    }
  for (std::size_t j = 0; j < cols; ++j) {
    std::vector<double> dev(kept.size());
    for (std::size_t row = 0; row < kept.size(); ++row)
      dev[row] = std::abs(r.deviations(Eigen::Index(row), Eigen::Index(j)));
    r.q95_abs_deviation.push_back(weighted_quantile(dev, r.weights, 0.95));
  }
  return r;
}

json ProportionalityReport::to_json() const {
  return {{"report", "proportionality"},
          {"times", times},
          {"threshold_L", json_real(threshold_L)},
          {"considered", considered},
          {"kept", replicates.size()},
          {"effective_samples", effective_size(weights)},
          {"q95_abs_deviation", q95_abs_deviation},
          {"total_quantiles", quantile_json(total, weights)}};
}

void ProportionalityReport::write_csv(std::ostream& out) const {
  out << "replicate,weight,total";
  for (Eigen::Index j = 0; j < energies.cols(); ++j) out << ",E_" << j + 1;
  for (Eigen::Index j = 0; j < deviations.cols(); ++j) out << ",dev_" << j + 1;
  out << '\n';
  for (std::size_t i = 0; i < replicates.size(); ++i) {
    out << replicates[i] << ',' << fmt17(weights[i]) << ',' << fmt17(total[i]);
    for (Eigen::Index j = 0; j < energies.cols(); ++j) out << ',' << fmt17(energies(Eigen::Index(i), j));
    for (Eigen::Index j = 0; j < deviations.cols(); ++j) out << ',' << fmt17(deviations(Eigen::Index(i), j));
    out << '\n';
  }
}

namespace {

void check_family(const std::vector<EndpointPair>& f) {
  for (std::size_t i = 1; i < f.size(); ++i)
    require(f[i - 1].x <= f[i].x && f[i - 1].y >= f[i].y, ErrorKind::parameter,
            "family must have nondecreasing starts and nonincreasing ends");
}

}  // namespace

ShiftInvarianceReport shift_invariance(const Model& model, const ScalingMap& map,
                                       const std::vector<EndpointPair>& family,
                                       const std::vector<EndpointPair>& shifted, std::uint64_t seed,
                                       std::int64_t replicates, bool common_random_numbers, int threads) {
  model.validate();
  require(!family.empty() && family.size() == shifted.size(), ErrorKind::parameter,
          "families must be nonempty and of equal size");
  require(replicates >= 1, ErrorKind::parameter, "replicates must be >= 1");
  check_family(family);
  check_family(shifted);
  for (std::size_t i = 0; i < family.size(); ++i)
    require(std::abs((family[i].x - family[i].y) - (shifted[i].x - shifted[i].y)) <= 1e-12, ErrorKind::parameter,
            "pair " + std::to_string(i) + " changes x - y");
  auto ends = [&](const std::vector<EndpointPair>& f) {
    std::vector<std::pair<Site, Site>> out;
    for (const auto& p : f) {
      const Site a = lattice_end(map, p.x, 0.0);
      const std::int64_t d = 2 * map.n() - 2;
      const std::int64_t m = (a.col - a.row) + map.transversal(p.y - p.x, d);
      require(std::abs(m) <= d, ErrorKind::range, "point lies beyond the lattice");
      const Site b = site_on(d, m);
      require(reachable(a, b), ErrorKind::range, "pair endpoints are not reachable on the lattice");
      out.emplace_back(a, b);
    }
    return out;
  };
  const auto e1 = ends(family), e2 = ends(shifted);
  const CellLaw law = model.law(map.n());
  const std::uint64_t other = common_random_numbers ? seed : mix64(seed ^ kShiftedStream);
  const auto m = Eigen::Index(family.size());

  ShiftInvarianceReport r;
  r.family = family;
  r.shifted = shifted;
  r.replicates = replicates;
  r.common_random_numbers = common_random_numbers;
  r.original.resize(replicates, m);
  r.moved.resize(replicates, m);
  parallel_for(replicates, threads, [&](std::int64_t i) {
    const std::uint64_t s1 = replicate_seed(seed, std::uint64_t(i));
    const std::uint64_t s2 = replicate_seed(other, std::uint64_t(i));
    for (Eigen::Index k = 0; k < m; ++k) {
      r.original(i, k) = map.to_rescaled(stream_point_to_point(law, model.beta, e1[k].first, e1[k].second, s1).value);
      r.moved(i, k) = map.to_rescaled(stream_point_to_point(law, model.beta, e2[k].first, e2[k].second, s2).value);
    }
  });
  auto col = [](const Eigen::MatrixXd& a, Eigen::Index k) {
    return std::vector<double>(a.col(k).data(), a.col(k).data() + a.rows());
  };
  for (Eigen::Index k = 0; k < m; ++k) r.per_pair.push_back(ks_two_sample(col(r.original, k), col(r.moved, k)));
  const Eigen::VectorXd s1 = r.original.rowwise().sum(), s2 = r.moved.rowwise().sum();
  r.joint_sum = ks_two_sample(std::vector<double>(s1.data(), s1.data() + s1.size()),
                              std::vector<double>(s2.data(), s2.data() + s2.size()));
  return r;
}

json ShiftInvarianceReport::to_json() const {
  auto pairs = [](const std::vector<EndpointPair>& f) {
    json j = json::array();
    for (const auto& p : f) j.push_back({{"x", p.x}, {"y", p.y}});
    return j;
  };
  json per = json::array();
  for (const auto& k : per_pair) per.push_back(kpz::to_json(k));
  return {{"report", "shift_invariance"},
          {"family", pairs(family)},
          {"shifted", pairs(shifted)},
          {"replicates", replicates},
          {"common_random_numbers", common_random_numbers},
          {"per_pair", per},
          {"joint_sum", kpz::to_json(joint_sum)}};
}

void ShiftInvarianceReport::write_csv(std::ostream& out) const {
  out << "replicate,family";
  for (Eigen::Index k = 0; k < original.cols(); ++k) out << ",value_" << k + 1;
  out << ",sum\n";
  for (const auto& [name, a] : {std::pair{"original", &original}, std::pair{"shifted", &moved}})
    for (Eigen::Index i = 0; i < a->rows(); ++i) {
      out << i << ',' << name;
      for (Eigen::Index k = 0; k < a->cols(); ++k) out << ',' << fmt17((*a)(i, k));
      out << ',' << fmt17(a->row(i).sum()) << '\n';
    }
}

MechanismResult gaussian_bridge_mechanism(double L, double delta, double M) {
  require(std::isfinite(L) && L > 0, ErrorKind::parameter, "L must be finite and > 0");
  require(std::isfinite(delta) && delta >= 0, ErrorKind::parameter, "delta must be finite and >= 0");
  require(M > 0, ErrorKind::parameter, "M must be > 0");
  require(M < std::sqrt(L), ErrorKind::parameter, "M must be below sqrt(L)");
  const double root = std::sqrt(L);
  const double mu = -L + 2 * root * M;
  const double sigma = std::sqrt(root - M);
  MechanismResult r;
  r.leading_term = std::exp(-2 * delta * root);
  r.exact_ratio = delta == 0 ? 1.0
                             : std::exp(log_normal_upper_tail((L + delta - mu) / sigma) -
                                        log_normal_upper_tail((L - mu) / sigma));
  return r;
}

std::vector<double> midpoint_displacement(const Model& model, std::int64_t n, std::int64_t replicates,
                                          std::uint64_t seed, int threads) {
  require(model.zero_temperature(), ErrorKind::parameter, "midpoint displacement uses geodesics (zero temperature)");
  require(n >= 2 && replicates >= 1, ErrorKind::parameter, "need n >= 2 and replicates >= 1");
  const CellLaw law = model.law(n);
  std::vector<double> out(static_cast<std::size_t>(replicates));
  parallel_for(replicates, threads, [&](std::int64_t i) {
    const EnvGrid grid = stream_window(law, replicate_seed(seed, std::uint64_t(i)), {0, 0}, n, n);
    const LatticePath path = backtrace(passage_field(grid.weights, Site{0, 0}), Site{n - 1, n - 1});
    const Site mid = path.at_antidiagonal(n - 1);
    out[i] = double(mid.col - mid.row);
  });
  return out;
}

}  // namespace kpz
