#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace kpz {

/// Row-major dense matrix; grids and DP fields are stored this way so a
/// lattice row is contiguous.
template <typename Scalar>
using Grid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GridXd = Grid<double>;

/// A lattice site, 0-based (row, col). Paths move one step down (row + 1)
/// or one step right (col + 1).
struct Site {
  std::int64_t row = 0;
  std::int64_t col = 0;

  /// Index of the antidiagonal the site lies on.
  constexpr std::int64_t antidiagonal() const { return row + col; }

  friend constexpr bool operator==(const Site&, const Site&) = default;
};

/// True when `b` is weakly down-right of `a`, i.e. an up-right path a -> b exists.
constexpr bool reachable(Site a, Site b) { return b.row >= a.row && b.col >= a.col; }

template <typename Scalar = double>
constexpr Scalar neg_inf() {
  return -std::numeric_limits<Scalar>::infinity();
}

/// Inverse temperature; +inf selects the zero-temperature (max-plus) kernels.
inline constexpr double kZeroTemperature = std::numeric_limits<double>::infinity();

enum class ErrorKind {
  parameter,
  bounds,
  unreachable,
  infeasible,
  range,
  insufficient_data,
  replay,
  internal,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when a rare-event estimator does not collect enough hits; carries
/// the achieved count.
class InsufficientData : public Error {
 public:
  InsufficientData(const std::string& what, double achieved)
      : Error(ErrorKind::insufficient_data, what), achieved_(achieved) {}
  double achieved() const { return achieved_; }

 private:
  double achieved_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

}  // namespace kpz
