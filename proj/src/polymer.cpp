#include "kpz/polymer.hpp"

#include <algorithm>

namespace kpz {

std::vector<Site> PathEnsemble::antidiagonal_sites(std::int64_t d) const {
  std::vector<Site> sites;
  // Left first: largest row first.
  const std::int64_t hi = std::min(b.row, d - a.col);
  const std::int64_t lo = std::max(a.row, d - b.col);
  for (std::int64_t r = hi; r >= lo; --r) sites.push_back({r, d - r});
  return sites;
}

PathEnsemble path_ensemble(const EnvGrid& grid, double beta, Site a, Site b) {
  detail::check_site(grid.weights, a, "start");
  detail::check_site(grid.weights, b, "end");
  require(reachable(a, b), ErrorKind::unreachable, "end is not down-right of start");
  require(beta > 0, ErrorKind::parameter, "beta must be > 0");
  PathEnsemble e;
  e.a = a;
  e.b = b;
  e.beta = beta;
  e.weights = grid.weights;
  const GridXd flipped = rotated(grid.weights);
  const Site b_rot = rotate(b, grid.rows(), grid.cols());
  if (e.zero_temperature()) {
    e.in = passage_field(grid.weights, a).values;
    e.out = rotated(passage_field(flipped, b_rot).values);
  } else {
    e.in = log_partition_field(grid.weights, beta, a).logz;
    e.out = rotated(log_partition_field(flipped, beta, b_rot).logz);
  }
  return e;
}

double QuenchedMarginal::operator()(Site s) const {
  for (std::size_t k = 0; k < sites.size(); ++k)
    if (sites[k] == s) return mass[k];
  return 0.0;
}

namespace {

void check_interior(const PathEnsemble& e, std::int64_t d) {
  require(d > e.a.antidiagonal() && d < e.b.antidiagonal(), ErrorKind::range,
          "antidiagonal must lie strictly between the endpoints");
}

}  // namespace

QuenchedMarginal quenched_marginal(const PathEnsemble& e, std::int64_t antidiagonal) {
  require(!e.zero_temperature(), ErrorKind::parameter, "quenched marginal needs finite beta");
  check_interior(e, antidiagonal);
  QuenchedMarginal m;
  m.antidiagonal = antidiagonal;
  m.sites = e.antidiagonal_sites(antidiagonal);
  m.mass.resize(m.sites.size());
  double top = neg_inf();
  for (std::size_t k = 0; k < m.sites.size(); ++k) {
    m.mass[k] = e.score(m.sites[k]);
    top = std::max(top, m.mass[k]);
  }
  double total = 0.0;
  for (double& v : m.mass) total += (v = std::exp(v - top));
  for (double& v : m.mass) v /= total;
  return m;
}

LatticePath sample_path(const PolymerField<double>& in, Site b, std::uint64_t seed) {
  const Site a = in.source;
  detail::check_site(in.logz, b, "end");
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
      const double up = in.logz(cur.row - 1, cur.col);
      const double left = in.logz(cur.row, cur.col - 1);
      // P(up) = 1 / (1 + exp(left - up))
      const double p_up = 1.0 / (1.0 + std::exp(left - up));
      const double u = to_unit(cell_bits(seed, streams::path, cur.row, cur.col));
      if (u < p_up) --cur.row;
      else --cur.col;
    }
  }
  path.sites[0] = cur;
  return path;
}

LatticePath sample_path(const EnvGrid& grid, double beta, Site a, Site b, std::uint64_t seed) {
  detail::check_site(grid.weights, b, "end");
  require(reachable(a, b), ErrorKind::unreachable, "end is not down-right of start");
  return sample_path(log_partition_field(grid, beta, a), b, seed);
}

std::vector<Site> backbone(const PathEnsemble& e, const std::vector<std::int64_t>& antidiagonals) {
  std::vector<Site> out;
  out.reserve(antidiagonals.size());
  for (const std::int64_t d : antidiagonals) {
    check_interior(e, d);
    const auto sites = e.antidiagonal_sites(d);
    Site best = sites.front();
    double best_score = e.score(best);
    for (std::size_t k = 1; k < sites.size(); ++k) {
      const double s = e.score(sites[k]);
      if (s > best_score) {
        best_score = s;
        best = sites[k];
      }
    }
    out.push_back(best);
  }
  return out;
}

std::vector<Site> backbone(const EnvGrid& grid, double beta, Site a, Site b,
                           const std::vector<std::int64_t>& antidiagonals) {
  return backbone(path_ensemble(grid, beta, a, b), antidiagonals);
}

double restricted_free_energy(const PathEnsemble& e, std::int64_t antidiagonal, const std::vector<Site>& window) {
  require(!window.empty(), ErrorKind::parameter, "window must be nonempty");
  double acc = neg_inf();
  for (const Site& s : window) {
    require(s.antidiagonal() == antidiagonal, ErrorKind::parameter, "window site off the antidiagonal");
    require(reachable(e.a, s) && reachable(s, e.b), ErrorKind::range, "window site outside the endpoint rectangle");
    acc = e.zero_temperature() ? std::max(acc, e.score(s)) : detail::log_add(acc, e.score(s));
  }
  return acc;
}

}  // namespace kpz
