#include "kpz/env.hpp"

#include "kpz/polymer.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace kpz {

static_assert(std::endian::native == std::endian::little, "binary grid format assumes little-endian");

void Distribution::validate() const {
  switch (kind) {
    case Kind::exponential:
      require(param > 0 && std::isfinite(param), ErrorKind::parameter, "exponential rate must be > 0");
      break;
    case Kind::log_gamma:
      require(param > 0 && std::isfinite(param), ErrorKind::parameter, "log-gamma shape must be > 0");
      break;
    case Kind::constant:
      require(param >= 0 && std::isfinite(param), ErrorKind::parameter, "constant weight must be >= 0");
      break;
  }
}

std::string Distribution::tag() const {
  std::ostringstream out;
  out.precision(17);
  switch (kind) {
    case Kind::exponential: out << "exponential(" << param << ")"; break;
    case Kind::log_gamma: out << "log-gamma(" << param << ")"; break;
    case Kind::constant: out << "constant(" << param << ")"; break;
  }
  return out.str();
}

Distribution Distribution::parse(const std::string& text) {
  const auto open = text.find('(');
  const auto close = text.rfind(')');
  require(open != std::string::npos && close == text.size() - 1 && close > open + 1,
          ErrorKind::parameter, "malformed distribution '" + text + "'");
  const std::string name = text.substr(0, open);
  const std::string arg = text.substr(open + 1, close - open - 1);
  double value = 0;
  const auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), value);
  require(ec == std::errc{} && ptr == arg.data() + arg.size(), ErrorKind::parameter,
          "malformed distribution parameter '" + arg + "'");
  Distribution d;
  if (name == "exponential") d = exponential(value);
  else if (name == "log-gamma") d = log_gamma(value);
  else if (name == "constant") d = constant(value);
  else fail(ErrorKind::parameter, "unknown distribution '" + name + "'");
  d.validate();
  return d;
}

void CellLaw::validate() const {
  dist.validate();
  require(reference_n >= 1, ErrorKind::parameter, "reference size must be >= 1");
  if (tilt) {
    require(dist.kind == Distribution::Kind::exponential, ErrorKind::parameter,
            "tilting requires an exponential base law");
    require(tilt->theta >= 0 && tilt->theta < 1, ErrorKind::parameter, "tilt theta must lie in [0, 1)");
    require(tilt->corridor_halfwidth >= 0, ErrorKind::parameter, "corridor halfwidth must be >= 0");
  }
}

double log_gamma_from_bits(std::uint32_t bits, double shape) {
  // Midpoint of the 2^-32 bin keeps the quantile away from 0 and 1.
  const double u = (static_cast<double>(bits) + 0.5) * 0x1.0p-32;
  const double g = boost::math::gamma_p_inv(shape, u);
  return -std::log(g);
}

std::vector<std::int64_t> CellLaw::tilted_path(std::uint64_t seed) const {
  const std::int64_t rows = tilted_extent.row, cols = tilted_extent.col;
  require(rows >= 1 && cols >= 1, ErrorKind::parameter, "path tilt needs a nonempty core");
  std::vector<std::int64_t> path(rows + cols - 1, 0);
  std::int64_t r = 0, c = 0;
  for (std::int64_t d = 1; d < rows + cols - 1; ++d) {
    // Down with probability (downs left) / (steps left): uniform over paths.
    const std::int64_t down = rows - 1 - r, right = cols - 1 - c;
    const double u = to_unit(cell_bits(seed, streams::tilt_path, r, c));
    if (u * double(down + right) < double(down)) ++r;
    else ++c;
    path[d] = r;
  }
  return path;
}

double CellLaw::path_log_lr(double log_z) const {
  if (tilt->theta == 0.0) return 0.0;
  const double rows = double(tilted_extent.row), cols = double(tilted_extent.col);
  const double log_paths = std::lgamma(rows + cols - 1) - std::lgamma(rows) - std::lgamma(cols);
  return log_paths - (rows + cols - 1) * std::log1p(-tilt->theta) - log_z;
}

double CellLaw::weight(std::uint64_t seed, std::int64_t row, std::int64_t col) const {
  const std::uint32_t bits = cell_bits(seed, streams::weights, row, col);
  switch (dist.kind) {
    case Distribution::Kind::exponential: {
      bool tilted = false;
      if (path_tilt()) {
        if (row >= 0 && col >= 0 && row < tilted_extent.row && col < tilted_extent.col)
          tilted = tilted_path(seed)[row + col] == row;
      } else {
        tilted = in_corridor(row, col, corridor_cells());
      }
      return exponential_from_bits(bits, tilted ? corridor_rate() : dist.param);
    }
    case Distribution::Kind::log_gamma: return log_gamma_from_bits(bits, dist.param);
    case Distribution::Kind::constant: return dist.param;
  }
  return 0.0;
}

EnvGrid make_grid(GridXd weights) {
  EnvGrid g;
  g.law.reference_n = std::min(weights.rows(), weights.cols());
  g.law.tilted_extent = {weights.rows(), weights.cols()};
  g.weights = std::move(weights);
  return g;
}

EnvGrid sample_window(const CellLaw& law, std::uint64_t seed, Site origin, std::int64_t rows,
                      std::int64_t cols) {
  require(rows >= 1 && cols >= 1, ErrorKind::parameter, "grid dimensions must be >= 1");
  law.validate();
  EnvGrid g;
  g.law = law;
  g.seed = seed;
  g.origin = origin;
  g.weights.resize(rows, cols);
  if (law.path_tilt() && law.dist.kind == Distribution::Kind::exponential) {
    const auto path = law.tilted_path(seed);
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < cols; ++c) {
        const Site a{origin.row + r, origin.col + c};
        const bool on = a.row >= 0 && a.col >= 0 && a.row < law.tilted_extent.row &&
                        a.col < law.tilted_extent.col && path[a.antidiagonal()] == a.row;
        g.weights(r, c) = exponential_from_bits(cell_bits(seed, streams::weights, a.row, a.col),
                                                on ? law.corridor_rate() : law.dist.param);
      }
    return g;
  }
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) g.weights(r, c) = law.weight(seed, origin.row + r, origin.col + c);
  return g;
}

EnvGrid sample_grid(std::int64_t rows, std::int64_t cols, const Distribution& dist, std::uint64_t seed) {
  CellLaw law{dist, std::nullopt, std::min(rows, cols), {rows, cols}};
  return sample_window(law, seed, {0, 0}, rows, cols);
}

double corridor_log_lr(const EnvGrid& grid) {
  if (!grid.law.tilt) return 0.0;
  if (grid.law.path_tilt()) {
    require(grid.origin == Site{0, 0} && grid.rows() == grid.law.tilted_extent.row &&
                grid.cols() == grid.law.tilted_extent.col,
            ErrorKind::parameter, "a path-tilt likelihood ratio needs the whole core");
    if (grid.law.tilt->theta == 0.0) return 0.0;
    const auto z = log_partition_field(grid.weights, grid.law.tilt->theta, {0, 0});
    return grid.law.path_log_lr(z.logz(grid.rows() - 1, grid.cols() - 1));
  }
  const double band = grid.law.corridor_cells();
  const std::int64_t rows = grid.rows();
  const std::int64_t cols = grid.cols();
  double acc = 0.0;
  for (std::int64_t d = 0; d <= rows + cols - 2; ++d) {
    const std::int64_t lo = std::max<std::int64_t>(0, d - (cols - 1));
    const std::int64_t hi = std::min<std::int64_t>(d, rows - 1);
    for (std::int64_t r = lo; r <= hi; ++r) {
      const std::int64_t c = d - r;
      if (grid.law.in_corridor(grid.origin.row + r, grid.origin.col + c, band))
        acc += grid.law.log_lr_term(grid.weights(r, c));
    }
  }
  return acc;
}

TiltedGrid sample_tilted_grid(std::int64_t rows, std::int64_t cols, const TiltSpec& tilt,
                              std::uint64_t seed, const Distribution& base) {
  CellLaw law{base, tilt, std::min(rows, cols), {rows, cols}};
  TiltedGrid out;
  out.grid = sample_window(law, seed, {0, 0}, rows, cols);
  out.log_lr = tilt.theta == 0.0 ? 0.0 : corridor_log_lr(out.grid);
  return out;
}

namespace {

constexpr std::array<char, 4> kMagic{'K', 'P', 'Z', 'G'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  require(bool(in), ErrorKind::parameter, "truncated grid container");
  return value;
}

}  // namespace

void write_binary(std::ostream& out, const EnvGrid& grid) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(grid.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(grid.cols()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(grid.law.dist.kind));
  put<double>(out, grid.law.dist.param);
  put<std::uint64_t>(out, grid.seed);
  put<std::uint8_t>(out, grid.law.tilt ? 1 : 0);
  put<double>(out, grid.law.tilt ? grid.law.tilt->theta : 0.0);
  put<double>(out, grid.law.tilt ? grid.law.tilt->corridor_halfwidth : 0.0);
  put<std::uint32_t>(out, grid.law.tilt ? static_cast<std::uint32_t>(grid.law.tilt->shape) : 0u);
  put<std::int64_t>(out, grid.law.reference_n);
  put<std::int64_t>(out, grid.law.tilted_extent.row);
  put<std::int64_t>(out, grid.law.tilted_extent.col);
  put<std::int64_t>(out, grid.origin.row);
  put<std::int64_t>(out, grid.origin.col);
  out.write(reinterpret_cast<const char*>(grid.weights.data()),
            static_cast<std::streamsize>(grid.weights.size() * sizeof(double)));
}

EnvGrid read_binary(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  require(bool(in) && magic == kMagic, ErrorKind::parameter, "not a grid container");
  require(get<std::uint32_t>(in) == kVersion, ErrorKind::parameter, "unsupported grid container version");
  EnvGrid g;
  const auto rows = static_cast<std::int64_t>(get<std::uint64_t>(in));
  const auto cols = static_cast<std::int64_t>(get<std::uint64_t>(in));
  g.law.dist.kind = static_cast<Distribution::Kind>(get<std::uint32_t>(in));
  g.law.dist.param = get<double>(in);
  g.seed = get<std::uint64_t>(in);
  const bool tilted = get<std::uint8_t>(in) != 0;
  const double theta = get<double>(in);
  const double halfwidth = get<double>(in);
  const auto shape = static_cast<TiltSpec::Shape>(get<std::uint32_t>(in));
  if (tilted) g.law.tilt = TiltSpec{theta, halfwidth, shape};
  g.law.reference_n = get<std::int64_t>(in);
  g.law.tilted_extent.row = get<std::int64_t>(in);
  g.law.tilted_extent.col = get<std::int64_t>(in);
  g.origin.row = get<std::int64_t>(in);
  g.origin.col = get<std::int64_t>(in);
  require(rows >= 1 && cols >= 1, ErrorKind::parameter, "grid container has empty shape");
  g.weights.resize(rows, cols);
  in.read(reinterpret_cast<char*>(g.weights.data()),
          static_cast<std::streamsize>(g.weights.size() * sizeof(double)));
  require(bool(in), ErrorKind::parameter, "truncated grid container body");
  return g;
}

void write_csv(std::ostream& out, const GridXd& values) {
  char buf[32];
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, values(r, c), std::chars_format::general, 17);
      if (c) out << ',';
      out.write(buf, end - buf);
    }
    out << '\n';
  }
}

}  // namespace kpz
