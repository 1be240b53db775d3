#pragma once

#include "kpz/lpp.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace kpz {

namespace detail {

template <typename Scalar>
Scalar log_add(Scalar a, Scalar b) {
  const Scalar hi = a < b ? b : a;
  const Scalar lo = a < b ? a : b;
  if (hi == neg_inf<Scalar>()) return hi;
  return hi + std::log1p(std::exp(lo - hi));
}

inline double log_add(double a, double b) { return fast::log_add(a, b); }

}  // namespace detail

/// log of the sum over up-right paths source -> (i, j) of exp(beta * weight),
/// endpoints included; -inf off the source quadrant.
template <typename Scalar>
struct PolymerField {
  Site source;
  Scalar beta = 1;
  Grid<Scalar> logz;

  Scalar operator()(Site s) const { return logz(s.row, s.col); }
};

template <typename Derived>
PolymerField<typename Derived::Scalar> log_partition_field(const Eigen::MatrixBase<Derived>& w,
                                                           typename Derived::Scalar beta, Site source) {
  using Scalar = typename Derived::Scalar;
  require(beta > 0 && std::isfinite(double(beta)), ErrorKind::parameter, "beta must be finite and > 0");
  detail::check_site(w, source, "source");
  PolymerField<Scalar> f{source, beta, Grid<Scalar>::Constant(w.rows(), w.cols(), neg_inf<Scalar>())};
  auto& z = f.logz;
  for (Eigen::Index i = source.row; i < w.rows(); ++i) {
    for (Eigen::Index j = source.col; j < w.cols(); ++j) {
      if (i == source.row && j == source.col) {
        z(i, j) = beta * w(i, j);
        continue;
      }
      const Scalar up = i > source.row ? z(i - 1, j) : neg_inf<Scalar>();
      const Scalar left = j > source.col ? z(i, j - 1) : neg_inf<Scalar>();
      z(i, j) = beta * w(i, j) + detail::log_add(left, up);
    }
  }
  return f;
}

inline PolymerField<double> log_partition_field(const EnvGrid& grid, double beta, Site source) {
  return log_partition_field(grid.weights, beta, source);
}

/// In-field from a and out-field from b (computed on the rotated grid), the
/// pair every intermediate-antidiagonal quantity between a and b is built from.
/// beta = +inf stores passage fields instead of log-partitions.
struct PathEnsemble {
  Site a, b;
  double beta = 1;
  GridXd in;   // from a, original orientation
  GridXd out;  // from b, original orientation (rotated back)
  GridXd weights;

  bool zero_temperature() const { return std::isinf(beta); }

  /// in + out - beta w at k: the log-weight (or passage) of paths a -> k -> b.
  double score(Site k) const {
    const double w = weights(k.row, k.col);
    return in(k.row, k.col) + out(k.row, k.col) - (zero_temperature() ? w : beta * w);
  }

  /// Sites of antidiagonal d inside the rectangle [a, b], left (small column) first.
  std::vector<Site> antidiagonal_sites(std::int64_t d) const;
};

PathEnsemble path_ensemble(const EnvGrid& grid, double beta, Site a, Site b);

struct QuenchedMarginal {
  std::int64_t antidiagonal = 0;
  std::vector<Site> sites;  // left to right
  std::vector<double> mass;

  double operator()(Site s) const;
};

/// Quenched law of the polymer's site on antidiagonal d, a.d < d < b.d.
QuenchedMarginal quenched_marginal(const PathEnsemble& e, std::int64_t antidiagonal);

/// Exact draw from the quenched polymer measure on paths a -> b (backward
/// sampling on the in-field; uniforms from the path stream of `seed`).
LatticePath sample_path(const EnvGrid& grid, double beta, Site a, Site b, std::uint64_t seed);
LatticePath sample_path(const PolymerField<double>& in, Site b, std::uint64_t seed);

/// Argmax of the score per antidiagonal; ties go to the leftmost site.
std::vector<Site> backbone(const PathEnsemble& e, const std::vector<std::int64_t>& antidiagonals);

/// beta = kZeroTemperature selects passage fields.
std::vector<Site> backbone(const EnvGrid& grid, double beta, Site a, Site b,
                           const std::vector<std::int64_t>& antidiagonals);

/// log of the sum of exp(score) over `window` (sites on one antidiagonal).
double restricted_free_energy(const PathEnsemble& e, std::int64_t antidiagonal, const std::vector<Site>& window);

}  // namespace kpz
