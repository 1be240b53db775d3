#pragma once

#include <array>
#include <bit>
#include <cstdint>

namespace kpz {

// Philox4x32-10 counter-based generator (Salmon, Moraes, Dror, Shaw 2011).
// Every output is a pure function of (counter, key).
namespace philox {

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter generate(Counter c, Key k) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

}  // namespace philox

/// Philox block holding the draws of cells (4g, d - 4g) .. (4g + 3, d - 4g - 3):
/// four consecutive rows of antidiagonal d share one block.
inline philox::Counter cell_block(std::uint64_t seed, std::uint32_t stream, std::int64_t d,
                                  std::int64_t group) {
  const philox::Counter ctr{static_cast<std::uint32_t>(group), static_cast<std::uint32_t>(d), stream, 0u};
  const philox::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return philox::generate(ctr, key);
}

/// 32 random bits for lattice cell (row, col) under `seed`. `stream`
/// separates independent uses of the same cell (weights, path sampling, ...).
inline std::uint32_t cell_bits(std::uint64_t seed, std::uint32_t stream, std::int64_t row,
                               std::int64_t col) {
  const auto block = cell_block(seed, stream, row + col, row >> 2);
  return block[static_cast<std::size_t>(row & 3)];
}

/// Uniform on [0, 1) with 32 random bits.
inline double to_unit(std::uint32_t bits) { return static_cast<double>(bits) * 0x1.0p-32; }

/// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Seed of replicate `index` in the stream of `master`.
inline constexpr std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x9E3779B97F4A7C15ull));
}

namespace streams {
inline constexpr std::uint32_t weights = 0;
inline constexpr std::uint32_t path = 1;
inline constexpr std::uint32_t tilt_path = 2;
}  // namespace streams

}  // namespace kpz
