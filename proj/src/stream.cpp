#include "kpz/stream.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kpz {
namespace {

struct Workspace {
  std::vector<double> prev, cur, w;
  std::vector<double> zprev, zcur;  // theta log-partition for path tilts
  std::vector<std::uint32_t> bits;
  std::vector<std::int64_t> path;

  void reset(std::int64_t rows, bool partition) {
    prev.assign(rows + 1, neg_inf());
    cur.assign(rows + 1, neg_inf());
    if (partition) {
      zprev.assign(rows + 1, neg_inf());
      zcur.assign(rows + 1, neg_inf());
    }
    w.assign(rows, 0.0);
    bits.assign(rows + 8, 0u);
  }
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

std::int64_t floor_div4(std::int64_t r) { return r >> 2; }

// Local rows [first, last] of antidiagonal d whose cells are tilted (empty when untilted).
struct Run {
  std::int64_t first = 0, last = -1;
};

Run corridor_run(const CellLaw& law, double band, Site o, std::int64_t d, std::int64_t lo, std::int64_t hi) {
  if (!law.tilt || law.path_tilt()) return {};
  // |r - c| <= band on antidiagonal a is a contiguous run of rows.
  const std::int64_t a = o.row + o.col + d;
  const auto r_lo = static_cast<std::int64_t>(std::ceil((double(a) - band) / 2));
  const auto r_hi = static_cast<std::int64_t>(std::floor((double(a) + band) / 2));
  const std::int64_t core_lo = std::max<std::int64_t>(0, a - (law.tilted_extent.col - 1));
  const std::int64_t core_hi = std::min<std::int64_t>(law.tilted_extent.row - 1, a);
  return {std::max({lo, r_lo - o.row, core_lo - o.row}), std::min({hi, r_hi - o.row, core_hi - o.row})};
}

// Fill w[lo..hi] with the weights of local cells (i, d - i) of the window at `o`.
void draw_antidiagonal(const CellLaw& law, Run tilted_run, std::uint64_t seed, Site o, std::int64_t d,
                       std::int64_t lo, std::int64_t hi, double* __restrict w, std::uint32_t* __restrict raw) {
  const std::int64_t abs_d = o.row + o.col + d;
  switch (law.dist.kind) {
    case Distribution::Kind::exponential: {
      const std::int64_t g0 = floor_div4(o.row + lo);
      const std::int64_t g1 = floor_div4(o.row + hi);
      for (std::int64_t g = g0; g <= g1; ++g) {
        const auto block = cell_block(seed, streams::weights, abs_d, g);
        std::uint32_t* out = raw + 4 * (g - g0);
        out[0] = block[0];
        out[1] = block[1];
        out[2] = block[2];
        out[3] = block[3];
      }
      // raw[k] holds absolute row 4 g0 + k.
      const std::int64_t shift = o.row - 4 * g0;
      const double base = law.dist.param;
      const double tilted = law.corridor_rate();
      const std::int64_t t0 = tilted_run.first, t1 = tilted_run.last;
      for (std::int64_t i = lo; i <= hi; ++i) {
        const double rate = i >= t0 && i <= t1 ? tilted : base;
        w[i] = exponential_from_bits(raw[i + shift], rate);
      }
      break;
    }
    case Distribution::Kind::log_gamma:
      for (std::int64_t i = lo; i <= hi; ++i)
        w[i] = log_gamma_from_bits(cell_bits(seed, streams::weights, o.row + i, abs_d - o.row - i), law.dist.param);
      break;
    case Distribution::Kind::constant:
      for (std::int64_t i = lo; i <= hi; ++i) w[i] = law.dist.param;
      break;
  }
}

void max_plus_step(const double* __restrict p, const double* __restrict w, double* __restrict c,
                   std::int64_t lo, std::int64_t hi) {
  for (std::int64_t i = lo; i <= hi; ++i) c[i + 1] = w[i] + std::max(p[i + 1], p[i]);
}

void log_sum_step(const double* __restrict p, const double* __restrict w, double beta,
                  double* __restrict c, std::int64_t lo, std::int64_t hi) {
  for (std::int64_t i = lo; i <= hi; ++i) c[i + 1] = beta * w[i] + fast::log_add(p[i + 1], p[i]);
}

// Runs the DP over the rows x cols window at `o`, from its corner through
// local antidiagonal `last`; on return ws.prev[i + 1] holds the value at
// local (i, last - i).
double run(const CellLaw& law, double beta, Site o, std::int64_t rows, std::int64_t cols, std::int64_t last,
           std::uint64_t seed, Workspace& ws) {
  law.validate();
  require(beta > 0, ErrorKind::parameter, "beta must be > 0");
  const double band = law.tilt ? law.corridor_cells() : -1.0;
  const bool zero_temperature = std::isinf(beta);
  const bool path_tilt = law.path_tilt();
  const bool whole_core = o == Site{0, 0} && rows == law.tilted_extent.row && cols == law.tilted_extent.col &&
                          last == rows + cols - 2;
  const bool partition = path_tilt && whole_core && law.tilt->theta > 0;
  ws.reset(rows, partition);
  if (path_tilt) ws.path = law.tilted_path(seed);
  const std::int64_t path_end = path_tilt ? static_cast<std::int64_t>(ws.path.size()) : 0;
  double log_lr = 0.0;

  for (std::int64_t d = 0; d <= last; ++d) {
    const std::int64_t lo = std::max<std::int64_t>(0, d - (cols - 1));
    const std::int64_t hi = std::min<std::int64_t>(d, rows - 1);
    double* w = ws.w.data();
    Run tilted = corridor_run(law, band, o, d, lo, hi);
    const std::int64_t a = o.row + o.col + d;
    if (path_tilt && a >= 0 && a < path_end) {
      const std::int64_t i = ws.path[a] - o.row;
      if (i >= lo && i <= hi) tilted = {i, i};
    }
    draw_antidiagonal(law, tilted, seed, o, d, lo, hi, w, ws.bits.data());
    if (!path_tilt)
      for (std::int64_t i = tilted.first; i <= tilted.last; ++i) log_lr += law.log_lr_term(w[i]);

    double* c = ws.cur.data();
    if (d == 0)
      c[1] = zero_temperature ? w[0] : beta * w[0];
    else if (zero_temperature)
      max_plus_step(ws.prev.data(), w, c, lo, hi);
    else
      log_sum_step(ws.prev.data(), w, beta, c, lo, hi);
    std::swap(ws.prev, ws.cur);

    if (partition) {
      const double theta = law.tilt->theta;
      if (d == 0) ws.zcur[1] = theta * w[0];
      else log_sum_step(ws.zprev.data(), w, theta, ws.zcur.data(), lo, hi);
      std::swap(ws.zprev, ws.zcur);
    }
  }
  if (path_tilt) {
    if (partition) return law.path_log_lr(ws.zprev[rows]);
    return whole_core ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  }
  return log_lr;
}

}  // namespace

StreamResult stream_point_to_point(const CellLaw& law, double beta, Site a, Site b, std::uint64_t seed) {
  require(reachable(a, b), ErrorKind::unreachable, "end is not down-right of start");
  auto& ws = workspace();
  const std::int64_t rows = b.row - a.row + 1, cols = b.col - a.col + 1;
  StreamResult out;
  out.log_lr = run(law, beta, a, rows, cols, rows + cols - 2, seed, ws);
  out.value = ws.prev[rows];
  return out;
}

std::vector<double> stream_antidiagonal(const CellLaw& law, double beta, Site a, std::int64_t d,
                                        std::int64_t m_lo, std::int64_t m_hi, std::uint64_t seed) {
  const std::int64_t local_d = d - a.antidiagonal();
  require(local_d >= 0, ErrorKind::unreachable, "antidiagonal precedes the start");
  require(m_lo <= m_hi && ((d - m_lo) % 2 + 2) % 2 == 0 && ((m_hi - m_lo) % 2) == 0, ErrorKind::parameter,
          "column-minus-row range must match the antidiagonal's parity");
  // Site with col - row = m on d: row (d - m) / 2, col (d + m) / 2.
  const std::int64_t row_max = (d - m_lo) / 2, col_max = (d + m_hi) / 2;
  const std::int64_t row_min = (d - m_hi) / 2, col_min = (d + m_lo) / 2;
  require(row_min >= a.row && col_min >= a.col, ErrorKind::unreachable, "antidiagonal sites not reachable from the start");
  auto& ws = workspace();
  const std::int64_t rows = row_max - a.row + 1, cols = col_max - a.col + 1;
  run(law, beta, a, rows, cols, local_d, seed, ws);
  std::vector<double> out;
  out.reserve((m_hi - m_lo) / 2 + 1);
  for (std::int64_t m = m_lo; m <= m_hi; m += 2) out.push_back(ws.prev[(d - m) / 2 - a.row + 1]);
  return out;
}

EnvGrid stream_window(const CellLaw& law, std::uint64_t seed, Site o, std::int64_t rows, std::int64_t cols) {
  require(rows >= 1 && cols >= 1, ErrorKind::parameter, "grid dimensions must be >= 1");
  law.validate();
  EnvGrid g;
  g.law = law;
  g.seed = seed;
  g.origin = o;
  g.weights.resize(rows, cols);
  auto& ws = workspace();
  ws.reset(rows, false);
  const double band = law.tilt ? law.corridor_cells() : -1.0;
  const bool path_tilt = law.path_tilt();
  if (path_tilt) ws.path = law.tilted_path(seed);
  const std::int64_t path_end = path_tilt ? static_cast<std::int64_t>(ws.path.size()) : 0;
  for (std::int64_t d = 0; d <= rows + cols - 2; ++d) {
    const std::int64_t lo = std::max<std::int64_t>(0, d - (cols - 1));
    const std::int64_t hi = std::min<std::int64_t>(d, rows - 1);
    Run tilted = corridor_run(law, band, o, d, lo, hi);
    const std::int64_t a = o.row + o.col + d;
    if (path_tilt && a >= 0 && a < path_end) {
      const std::int64_t i = ws.path[a] - o.row;
      if (i >= lo && i <= hi) tilted = {i, i};
    }
    draw_antidiagonal(law, tilted, seed, o, d, lo, hi, ws.w.data(), ws.bits.data());
    for (std::int64_t i = lo; i <= hi; ++i) g.weights(i, d - i) = ws.w[i];
  }
  return g;
}

StreamResult stream_terminal(const CellLaw& law, double beta, std::int64_t n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::parameter, "lattice size must be >= 1");
  return stream_point_to_point(law, beta, {0, 0}, {n - 1, n - 1}, seed);
}

std::vector<double> stream_profile(const CellLaw& law, double beta, std::int64_t n, std::int64_t pad,
                                   std::uint64_t seed) {
  require(n >= 1 && pad >= 0 && pad < n, ErrorKind::parameter, "profile padding must lie in [0, n)");
  // k indexes row n-1+k, i.e. col - row = -2k; stream_antidiagonal lists m ascending.
  auto v = stream_antidiagonal(law, beta, {0, 0}, 2 * n - 2, -2 * pad, 2 * pad, seed);
  std::reverse(v.begin(), v.end());
  return v;
}

}  // namespace kpz
