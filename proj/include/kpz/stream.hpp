#pragma once

// Grid-free replicate kernels. Cells are drawn on the fly, antidiagonal by
// antidiagonal, from the counter-based generator, so a replicate costs
// O(rows) memory. Every value produced here is bit-identical to running
// passage_field / log_partition_field on the materialized window of the
// same (law, seed).

#include "kpz/env.hpp"

#include <cstdint>
#include <vector>

namespace kpz {

struct StreamResult {
  /// Passage value or log-partition.
  double value = 0.0;
  /// Log likelihood ratio of the tilted cells generated (0 when untilted).
  /// For a path tilt it is defined only when the window is the whole core
  /// and is NaN otherwise.
  double log_lr = 0.0;
};

/// a -> b in absolute coordinates (negative rows/cols allowed).
StreamResult stream_point_to_point(const CellLaw& law, double beta, Site a, Site b, std::uint64_t seed);

/// Values from absolute `a` to the sites of absolute antidiagonal `d` whose
/// column minus row runs over m_lo, m_lo + 2, ..., m_hi (same parity as d).
std::vector<double> stream_antidiagonal(const CellLaw& law, double beta, Site a, std::int64_t d,
                                        std::int64_t m_lo, std::int64_t m_hi, std::uint64_t seed);

/// Same values as sample_window(law, seed, origin, rows, cols), drawn with
/// the vectorized antidiagonal kernels.
EnvGrid stream_window(const CellLaw& law, std::uint64_t seed, Site origin, std::int64_t rows, std::int64_t cols);

/// Terminal value of replicate `seed` on the n x n core, (0, 0) -> (n-1, n-1).
StreamResult stream_terminal(const CellLaw& law, double beta, std::int64_t n, std::uint64_t seed);

/// Values from (0, 0) to the sites (n-1+k, n-1-k), k = -pad..pad, on the
/// antidiagonal through the terminal corner; index k + pad. Needs pad < n.
std::vector<double> stream_profile(const CellLaw& law, double beta, std::int64_t n, std::int64_t pad,
                                   std::uint64_t seed);

}  // namespace kpz
