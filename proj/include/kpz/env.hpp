#pragma once

#include "kpz/core.hpp"
#include "kpz/fast_math.hpp"
#include "kpz/random.hpp"

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kpz {

/// Law of a single environment cell.
struct Distribution {
  enum class Kind : std::uint32_t { exponential = 0, log_gamma = 1, constant = 2 };

  Kind kind = Kind::exponential;
  /// rate for exponential, shape for log-gamma, value for constant.
  double param = 1.0;

  static Distribution exponential(double rate = 1.0) { return {Kind::exponential, rate}; }
  static Distribution log_gamma(double shape) { return {Kind::log_gamma, shape}; }
  static Distribution constant(double value) { return {Kind::constant, value}; }

  void validate() const;
  std::string tag() const;
  static Distribution parse(const std::string& text);

  friend bool operator==(const Distribution&, const Distribution&) = default;
};

/// Exponential tilt of a set of cells to rate (1 - theta).
/// corridor: the straight band |row - col| <= corridor_halfwidth n^{2/3}.
/// path: the cells of one uniformly random up-right path across the core,
/// drawn from the replicate's seed; the likelihood ratio then averages over
/// paths and needs the log-partition at inverse temperature theta.
struct TiltSpec {
  enum class Shape : std::uint32_t { corridor = 0, path = 1 };

  double theta = 0.0;               // in [0, 1)
  double corridor_halfwidth = 0.0;  // multiple of n^{2/3}, lattice units
  Shape shape = Shape::corridor;

  friend bool operator==(const TiltSpec&, const TiltSpec&) = default;
};

/// Everything needed to draw cell (row, col) of a replicate: base law,
/// optional tilt and the lattice size that fixes the corridor width.
/// Coordinates are absolute, so windows that extend past the core grid
/// (negative indices included) see the same values on the overlap.
struct CellLaw {
  Distribution dist = Distribution::exponential();
  std::optional<TiltSpec> tilt;
  std::int64_t reference_n = 1;
  /// Tilting only touches cells of [0, rows) x [0, cols) given here.
  Site tilted_extent{0, 0};

  void validate() const;

  double corridor_cells() const {
    return tilt ? tilt->corridor_halfwidth * std::cbrt(double(reference_n) * reference_n) : -1.0;
  }

  bool path_tilt() const { return tilt && tilt->shape == TiltSpec::Shape::path; }

  /// Row of the tilted path on each antidiagonal 0 .. rows + cols - 2 of the core.
  std::vector<std::int64_t> tilted_path(std::uint64_t seed) const;

  /// log(base / tilted density) of a core whose theta log-partition is log_z.
  double path_log_lr(double log_z) const;

  bool in_corridor(std::int64_t row, std::int64_t col, double band) const {
    return tilt && tilt->shape == TiltSpec::Shape::corridor && row >= 0 && col >= 0 && row < tilted_extent.row && col < tilted_extent.col &&
           double(row > col ? row - col : col - row) <= band;
  }

  /// Rate multiplier of a corridor cell.
  double corridor_rate() const { return tilt ? dist.param * (1.0 - tilt->theta) : dist.param; }

  /// log(base density / tilted density) contributed by a corridor cell of weight w.
  double log_lr_term(double w) const {
    return -dist.param * tilt->theta * w - std::log1p(-tilt->theta);
  }

  double weight(std::uint64_t seed, std::int64_t row, std::int64_t col) const;

  friend bool operator==(const CellLaw&, const CellLaw&) = default;
};

/// Inverse-CDF exponential draw from 32 random bits (largest value 32 ln 2 / rate).
inline double exponential_from_bits(std::uint32_t bits, double rate) {
  const double tail = 1.0 - to_unit(bits);  // in (0, 1], exact
  return -fast::log(tail) / rate;
}

double log_gamma_from_bits(std::uint32_t bits, double shape);

/// A materialized rectangle of the environment.
struct EnvGrid {
  GridXd weights;
  CellLaw law;
  std::uint64_t seed = 0;
  /// Absolute coordinate of weights(0, 0).
  Site origin{0, 0};

  std::int64_t rows() const { return weights.rows(); }
  std::int64_t cols() const { return weights.cols(); }
  bool contains(Site s) const { return s.row >= 0 && s.col >= 0 && s.row < rows() && s.col < cols(); }
  double operator()(Site s) const { return weights(s.row, s.col); }
  const std::optional<TiltSpec>& tilt() const { return law.tilt; }
  const Distribution& dist() const { return law.dist; }

  /// Local site of an absolute coordinate.
  Site local(Site absolute) const { return {absolute.row - origin.row, absolute.col - origin.col}; }
};

/// Grid built directly from a weight matrix (tests, fixtures).
EnvGrid make_grid(GridXd weights);

EnvGrid sample_grid(std::int64_t rows, std::int64_t cols, const Distribution& dist,
                    std::uint64_t seed);

struct TiltedGrid {
  EnvGrid grid;
  double log_lr = 0.0;
};

/// Tilted exponential environment; corridor cells use rate (1 - theta).
/// exp(log_lr) is the density ratio base/tilted at the sampled grid.
TiltedGrid sample_tilted_grid(std::int64_t rows, std::int64_t cols, const TiltSpec& tilt,
                              std::uint64_t seed, const Distribution& base = Distribution::exponential());

/// Rectangle [origin, origin + (rows, cols)) of the replicate (law, seed).
EnvGrid sample_window(const CellLaw& law, std::uint64_t seed, Site origin, std::int64_t rows,
                      std::int64_t cols);

/// log(base / tilted density) of the grid. Corridor tilts accumulate over
/// corridor cells antidiagonal by antidiagonal, rows ascending (the order the
/// streaming kernels use); path tilts need the grid to be exactly the core.
double corridor_log_lr(const EnvGrid& grid);

// Binary container: "KPZG", version, shape, law, seed, origin, then the
// weights row-major as little-endian float64.
void write_binary(std::ostream& out, const EnvGrid& grid);
EnvGrid read_binary(std::istream& in);
void write_csv(std::ostream& out, const GridXd& values);

}  // namespace kpz
