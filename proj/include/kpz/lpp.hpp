#pragma once

#include "kpz/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace kpz {

/// Last-passage values from `source`; cells not reachable from it hold -inf.
/// Both endpoint weights are included in a passage value.
template <typename Scalar>
struct PassageField {
  Site source;
  Grid<Scalar> values;

  Scalar operator()(Site s) const { return values(s.row, s.col); }
};

/// Monotone lattice path, one site per antidiagonal.
struct LatticePath {
  std::vector<Site> sites;

  std::size_t size() const { return sites.size(); }
  const Site& front() const { return sites.front(); }
  const Site& back() const { return sites.back(); }
  /// The path's site on antidiagonal d (which must lie in its span).
  const Site& at_antidiagonal(std::int64_t d) const { return sites[d - sites.front().antidiagonal()]; }
};

/// Every step goes one down or one right.
bool is_up_right(const LatticePath& path);

template <typename Derived>
typename Derived::Scalar path_weight(const Eigen::MatrixBase<Derived>& w, const LatticePath& path) {
  typename Derived::Scalar total = 0;
  for (const Site& s : path.sites) total += w(s.row, s.col);
  return total;
}

inline double path_weight(const EnvGrid& grid, const LatticePath& path) {
  return path_weight(grid.weights, path);
}

namespace detail {

template <typename Derived>
void check_site(const Eigen::MatrixBase<Derived>& w, Site s, const char* what) {
  require(s.row >= 0 && s.col >= 0 && s.row < w.rows() && s.col < w.cols(), ErrorKind::bounds,
          std::string(what) + " out of range");
}

}  // namespace detail

/// Row-major DP over the quadrant below-right of `source`.
template <typename Derived>
PassageField<typename Derived::Scalar> passage_field(const Eigen::MatrixBase<Derived>& w, Site source) {
  using Scalar = typename Derived::Scalar;
  detail::check_site(w, source, "source");
  PassageField<Scalar> f{source, Grid<Scalar>::Constant(w.rows(), w.cols(), neg_inf<Scalar>())};
  auto& v = f.values;
  for (Eigen::Index i = source.row; i < w.rows(); ++i) {
    for (Eigen::Index j = source.col; j < w.cols(); ++j) {
      if (i == source.row && j == source.col) {
        v(i, j) = w(i, j);
        continue;
      }
      const Scalar up = i > source.row ? v(i - 1, j) : neg_inf<Scalar>();
      const Scalar left = j > source.col ? v(i, j - 1) : neg_inf<Scalar>();
      v(i, j) = w(i, j) + std::max(left, up);
    }
  }
  return f;
}

inline PassageField<double> passage_field(const EnvGrid& grid, Site source) {
  return passage_field(grid.weights, source);
}

template <typename Derived>
typename Derived::Scalar point_to_point(const Eigen::MatrixBase<Derived>& w, Site a, Site b) {
  detail::check_site(w, a, "start");
  detail::check_site(w, b, "end");
  require(reachable(a, b), ErrorKind::unreachable, "end is not down-right of start");
  // Only the rectangle [a, b] matters.
  const auto block = w.block(a.row, a.col, b.row - a.row + 1, b.col - a.col + 1);
  const auto f = passage_field(block, Site{0, 0});
  return f.values(b.row - a.row, b.col - a.col);
}

inline double point_to_point(const EnvGrid& grid, Site a, Site b) {
  return point_to_point(grid.weights, a, b);
}

/// Backtrace of a maximizing path a -> b. On ties the path steps down
/// first, i.e. the backtrace prefers the left predecessor.
template <typename Scalar>
LatticePath backtrace(const PassageField<Scalar>& f, Site b) {
  const Site a = f.source;
  require(reachable(a, b), ErrorKind::unreachable, "end is not down-right of start");
  LatticePath path;
  path.sites.resize(b.antidiagonal() - a.antidiagonal() + 1);
  Site cur = b;
  for (auto k = static_cast<std::ptrdiff_t>(path.sites.size()) - 1; k > 0; --k) {
    path.sites[k] = cur;
    if (cur.row == a.row) {
      --cur.col;
    } else if (cur.col == a.col) {
      --cur.row;
    } else {
      const Scalar up = f.values(cur.row - 1, cur.col);
      const Scalar left = f.values(cur.row, cur.col - 1);
      if (left >= up) --cur.col;
      else --cur.row;
    }
  }
  path.sites[0] = cur;
  return path;
}

template <typename Derived>
LatticePath geodesic(const Eigen::MatrixBase<Derived>& w, Site a, Site b) {
  detail::check_site(w, b, "end");
  require(reachable(a, b), ErrorKind::unreachable, "end is not down-right of start");
  return backtrace(passage_field(w, a), b);
}

inline LatticePath geodesic(const EnvGrid& grid, Site a, Site b) { return geodesic(grid.weights, a, b); }

/// Best total weight of two vertex-disjoint up-right paths a1 -> b1 and
/// a2 -> b2, with path 2 at a strictly larger column than path 1 on every
/// antidiagonal both paths visit. Endpoints need not share antidiagonals.
double two_path_passage(const GridXd& w, std::pair<Site, Site> starts, std::pair<Site, Site> ends);

inline double two_path_passage(const EnvGrid& grid, std::pair<Site, Site> starts, std::pair<Site, Site> ends) {
  return two_path_passage(grid.weights, starts, ends);
}

/// straight - crossing, with anything below 64 ulps of the operands set to 0.
template <typename Scalar>
Scalar snap_defect(Scalar straight, Scalar crossing) {
  const Scalar scale = std::max(std::abs(straight), std::abs(crossing));
  const Scalar d = straight - crossing;
  return std::abs(d) <= 64 * std::numeric_limits<Scalar>::epsilon() * scale ? Scalar(0) : d;
}

/// [G(x1 -> y1) + G(x2 -> y2)] - [G(x1 -> y2) + G(x2 -> y1)], nonnegative when
/// x1, y1 lie left of x2, y2. Differences within rounding of the four sums
/// (coalesced geodesics) are returned as exactly 0.
template <typename Derived>
typename Derived::Scalar quadrangle_defect(const Eigen::MatrixBase<Derived>& w, Site x1, Site x2, Site y1,
                                           Site y2) {
  for (const auto& [a, b] : {std::pair{x1, y1}, std::pair{x2, y2}, std::pair{x1, y2}, std::pair{x2, y1}})
    require(reachable(a, b), ErrorKind::infeasible, "quadrangle endpoints are not pairwise reachable");
  const auto f1 = passage_field(w, x1);
  const auto f2 = passage_field(w, x2);
  using Scalar = typename Derived::Scalar;
  const Scalar straight = f1(y1) + f2(y2);
  const Scalar crossing = f1(y2) + f2(y1);
  return snap_defect(straight, crossing);
}

inline double quadrangle_defect(const EnvGrid& grid, Site x1, Site x2, Site y1, Site y2) {
  return quadrangle_defect(grid.weights, x1, x2, y1, y2);
}

/// 180 degree rotation of a rows x cols lattice.
constexpr Site rotate(Site s, std::int64_t rows, std::int64_t cols) {
  return {rows - 1 - s.row, cols - 1 - s.col};
}

template <typename Derived>
Grid<typename Derived::Scalar> rotated(const Eigen::MatrixBase<Derived>& w) {
  return w.reverse();
}

EnvGrid rotated(const EnvGrid& grid);

}  // namespace kpz
