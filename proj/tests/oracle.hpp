#pragma once

// Brute-force references for the DP kernels: every up-right path is listed
// explicitly and scored on its own.

#include "kpz/core.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using kpz::Site;
using Path = std::vector<Site>;

inline kpz::Site S(std::int64_t row1, std::int64_t col1) { return {row1 - 1, col1 - 1}; }

inline std::vector<Path> all_paths(Site a, Site b) {
  std::vector<Path> out;
  if (b.row < a.row || b.col < a.col) return out;
  Path cur{a};
  std::function<void(Site)> walk = [&](Site s) {
    if (s == b) {
      out.push_back(cur);
      return;
    }
    if (s.row < b.row) {
      cur.push_back({s.row + 1, s.col});
      walk(cur.back());
      cur.pop_back();
    }
    if (s.col < b.col) {
      cur.push_back({s.row, s.col + 1});
      walk(cur.back());
      cur.pop_back();
    }
  };
  walk(a);
  return out;
}

inline long double weight(const kpz::GridXd& w, const Path& p) {
  long double t = 0;
  for (const Site& s : p) t += w(s.row, s.col);
  return t;
}

inline double best(const kpz::GridXd& w, Site a, Site b) {
  long double m = -std::numeric_limits<long double>::infinity();
  for (const auto& p : all_paths(a, b)) m = std::max(m, weight(w, p));
  return double(m);
}

/// log sum exp(beta * weight) with a max shift, long double throughout.
inline double log_partition(const kpz::GridXd& w, double beta, Site a, Site b) {
  const auto paths = all_paths(a, b);
  long double top = -std::numeric_limits<long double>::infinity();
  for (const auto& p : paths) top = std::max(top, beta * weight(w, p));
  long double sum = 0;
  for (const auto& p : paths) sum += std::exp(beta * weight(w, p) - top);
  return double(top + std::log(sum));
}

inline const Site* on_antidiagonal(const Path& p, std::int64_t d) {
  for (const Site& s : p)
    if (s.row + s.col == d) return &s;
  return nullptr;
}

/// Vertex-disjoint and path 2 strictly right (larger column) wherever both
/// visit the same antidiagonal.
inline bool ordered_disjoint(const Path& p1, const Path& p2) {
  for (const Site& s : p1) {
    const Site* t = on_antidiagonal(p2, s.row + s.col);
    if (t && !(t->col > s.col)) return false;
  }
  return true;
}

inline double best_pair(const kpz::GridXd& w, Site a1, Site a2, Site b1, Site b2) {
  long double m = -std::numeric_limits<long double>::infinity();
  const auto first = all_paths(a1, b1);
  const auto second = all_paths(a2, b2);
  for (const auto& p : first)
    for (const auto& q : second)
      if (ordered_disjoint(p, q)) m = std::max(m, weight(w, p) + weight(w, q));
  return double(m);
}

/// Polymer probability that a path a -> b visits site k.
inline double visit_probability(const kpz::GridXd& w, double beta, Site a, Site b, Site k) {
  const auto paths = all_paths(a, b);
  long double top = -std::numeric_limits<long double>::infinity();
  for (const auto& p : paths) top = std::max(top, beta * weight(w, p));
  long double total = 0, hit = 0;
  for (const auto& p : paths) {
    const long double z = std::exp(beta * weight(w, p) - top);
    total += z;
    if (on_antidiagonal(p, k.row + k.col) && *on_antidiagonal(p, k.row + k.col) == k) hit += z;
  }
  return double(hit / total);
}

}  // namespace oracle
