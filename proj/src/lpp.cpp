#include "kpz/lpp.hpp"

#include <array>

namespace kpz {

bool is_up_right(const LatticePath& path) {
  for (std::size_t k = 1; k < path.sites.size(); ++k) {
    const Site& p = path.sites[k - 1];
    const Site& q = path.sites[k];
    const bool down = q.row == p.row + 1 && q.col == p.col;
    const bool right = q.row == p.row && q.col == p.col + 1;
    if (!down && !right) return false;
  }
  return true;
}

EnvGrid rotated(const EnvGrid& grid) {
  EnvGrid out = grid;
  out.weights = rotated(grid.weights);
  out.origin = {0, 0};
  return out;
}

namespace {

// One path of the pair: the rectangle it may occupy and the antidiagonals
// it is alive on.
struct Leg {
  Site a, b;

  bool alive(std::int64_t d) const { return d >= a.antidiagonal() && d <= b.antidiagonal(); }
  bool admits(std::int64_t d, std::int64_t row) const {
    const std::int64_t col = d - row;
    return row >= a.row && row <= b.row && col >= a.col && col <= b.col;
  }
};

}  // namespace

double two_path_passage(const GridXd& w, std::pair<Site, Site> starts, std::pair<Site, Site> ends) {
  const std::array<Leg, 2> legs{Leg{starts.first, ends.first}, Leg{starts.second, ends.second}};
  for (const Leg& leg : legs) {
    detail::check_site(w, leg.a, "start");
    detail::check_site(w, leg.b, "end");
    require(reachable(leg.a, leg.b), ErrorKind::unreachable, "end is not down-right of start");
  }

  const std::int64_t rows = w.rows();
  const std::int64_t off = rows;  // "not on this antidiagonal"
  const std::int64_t d0 = std::min(legs[0].a.antidiagonal(), legs[1].a.antidiagonal());
  const std::int64_t d1 = std::max(legs[0].b.antidiagonal(), legs[1].b.antidiagonal());

  GridXd prev = GridXd::Constant(rows + 1, rows + 1, neg_inf());
  GridXd cur = prev;

  auto settle = [&](std::int64_t d, std::int64_t p1, std::int64_t p2, double base, GridXd& into) {
    const std::array<std::int64_t, 2> pos{p1, p2};
    double value = base;
    for (int k = 0; k < 2; ++k) {
      if (pos[k] == off) continue;
      if (!legs[k].admits(d, pos[k])) return;
      value += w(pos[k], d - pos[k]);
    }
    // Path 2 at a strictly larger column means a strictly smaller row.
    if (p1 != off && p2 != off && !(p2 < p1)) return;
    if (value > into(p1, p2)) into(p1, p2) = value;
  };

  auto moves = [&](int k, std::int64_t d, std::int64_t p, std::array<std::int64_t, 2>& out) -> int {
    const Leg& leg = legs[k];
    if (!leg.alive(d + 1)) {
      out[0] = off;
      return 1;
    }
    if (!leg.alive(d)) {
      out[0] = leg.a.row;
      return 1;
    }
    out[0] = p;
    out[1] = p + 1;
    return 2;
  };

  {
    const std::int64_t p1 = legs[0].alive(d0) ? legs[0].a.row : off;
    const std::int64_t p2 = legs[1].alive(d0) ? legs[1].a.row : off;
    settle(d0, p1, p2, 0.0, prev);
  }
  for (std::int64_t d = d0; d < d1; ++d) {
    cur.setConstant(neg_inf());
    for (std::int64_t p1 = 0; p1 <= off; ++p1) {
      for (std::int64_t p2 = 0; p2 <= off; ++p2) {
        const double base = prev(p1, p2);
        if (base == neg_inf()) continue;
        std::array<std::int64_t, 2> m1{}, m2{};
        const int n1 = moves(0, d, p1, m1);
        const int n2 = moves(1, d, p2, m2);
        for (int u = 0; u < n1; ++u)
          for (int v = 0; v < n2; ++v) settle(d + 1, m1[u], m2[v], base, cur);
      }
    }
    std::swap(prev, cur);
  }

  const double best = prev.maxCoeff();
  require(best != neg_inf(), ErrorKind::infeasible, "no disjoint ordered pair of paths exists");
  return best;
}

}  // namespace kpz
