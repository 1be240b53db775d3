#include "kpz/env.hpp"
#include "kpz/lpp.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

using namespace kpz;

TEST_CASE("sample_grid basics") {
  const auto one = sample_grid(1, 1, Distribution::exponential(1), 7);
  CHECK(one.weights(0, 0) > 0);

  const auto ones = sample_grid(2, 2, Distribution::constant(1), 123);
  CHECK(ones.weights == GridXd::Ones(2, 2));

  CHECK_THROWS_AS(sample_grid(2, 2, Distribution::exponential(0), 1), Error);
  CHECK_THROWS_AS(sample_grid(2, 2, Distribution::log_gamma(-1), 1), Error);
  CHECK_THROWS_AS(sample_grid(0, 2, Distribution::exponential(1), 1), Error);
}

TEST_CASE("exponential law of large numbers") {
  // sd of a 10^4-cell mean is 0.01; 4 sigma = 0.04 sits inside the 0.05 band.
  const auto g = sample_grid(100, 100, Distribution::exponential(1), 42);
  CHECK(std::abs(g.weights.mean() - 1.0) < 0.05);
  CHECK((g.weights.array() > 0).all());

  int inside = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto h = sample_grid(100, 100, Distribution::exponential(2), seed);
    inside += std::abs(h.weights.mean() - 0.5) < 4 * 0.005;
  }
  CHECK(inside >= 49);
}

TEST_CASE("regeneration is bit-identical and traversal independent") {
  const auto a = sample_grid(17, 23, Distribution::exponential(1), 99);
  const auto b = sample_grid(17, 23, Distribution::exponential(1), 99);
  CHECK(a.weights == b.weights);
  const auto c = sample_grid(17, 23, Distribution::exponential(1), 100);
  CHECK(a.weights != c.weights);

  CellLaw law{Distribution::exponential(1), std::nullopt, 17};
  const auto window = sample_window(law, 99, {5, 7}, 4, 6);
  CHECK(window.weights == a.weights.block(5, 7, 4, 6));
  for (int r = 0; r < 17; r += 5)
    for (int col = 0; col < 23; col += 3) CHECK(law.weight(99, r, col) == a.weights(r, col));
}

TEST_CASE("log-gamma weights") {
  const auto g = sample_grid(60, 60, Distribution::log_gamma(2.0), 5);
  // E[-log Gamma(2)] = -digamma(2) = gamma_E - 1
  CHECK(std::abs(g.weights.mean() - (0.5772156649015329 - 1.0)) < 0.05);
}

TEST_CASE("tilted grids") {
  const auto untilted = sample_tilted_grid(8, 8, TiltSpec{0.0, 1.0}, 3);
  CHECK(untilted.log_lr == 0.0);
  CHECK(untilted.grid.weights == sample_grid(8, 8, Distribution::exponential(), 3).weights);

  // 1x1: the single cell is in any corridor.
  const auto single = sample_tilted_grid(1, 1, TiltSpec{0.5, 0.0}, 11);
  const double w = single.grid.weights(0, 0);
  CHECK(single.log_lr == doctest::Approx(-0.5 * w - std::log(0.5)).epsilon(1e-14));

  CHECK_THROWS_AS(sample_tilted_grid(2, 2, TiltSpec{1.0, 1.0}, 1), Error);
  CHECK_THROWS_AS(sample_tilted_grid(2, 2, TiltSpec{-0.1, 1.0}, 1), Error);
}

TEST_CASE("monotone coupling") {
  const auto lo = sample_tilted_grid(12, 12, TiltSpec{0.2, 0.5}, 8);
  const auto hi = sample_tilted_grid(12, 12, TiltSpec{0.6, 0.5}, 8);
  const double band = 0.5 * std::cbrt(144.0);
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 12; ++c) {
      if (std::abs(r - c) <= band) CHECK(hi.grid.weights(r, c) >= lo.grid.weights(r, c));
      else CHECK(hi.grid.weights(r, c) == lo.grid.weights(r, c));
    }
}

namespace {

struct Mc {
  double mean = 0, se = 0;
};

template <typename F>
Mc monte_carlo(int reps, F&& f) {
  double s = 0, s2 = 0;
  for (int r = 0; r < reps; ++r) {
    const double v = f(r);
    s += v;
    s2 += v * v;
  }
  Mc m;
  m.mean = s / reps;
  m.se = std::sqrt(std::max(0.0, s2 / reps - m.mean * m.mean) / reps);
  return m;
}

bool agree(const Mc& a, const Mc& b, double k) {
  return std::abs(a.mean - b.mean) <= k * std::hypot(a.se, b.se);
}

}  // namespace

TEST_CASE("tilted estimator agrees with plain Monte Carlo on 2x2") {
  const int reps = 100000;
  const TiltSpec tilt{0.3, 1.0};  // 2^{2/3} > 1: every cell in the corridor
  auto passage = [](const EnvGrid& g) { return point_to_point(g, {0, 0}, {1, 1}); };
  const Mc plain = monte_carlo(reps, [&](int r) {
    return passage(sample_grid(2, 2, Distribution::exponential(), replicate_seed(1, r))) > 6 ? 1.0 : 0.0;
  });
  const Mc tilted = monte_carlo(reps, [&](int r) {
    const auto t = sample_tilted_grid(2, 2, tilt, replicate_seed(2, r));
    return passage(t.grid) > 6 ? std::exp(t.log_lr) : 0.0;
  });
  CHECK(plain.mean > 0);
  CHECK(agree(plain, tilted, 3));
}

TEST_CASE("tilted estimator is unbiased for fixed functionals") {
  const int reps = 40000;
  const int n = 4;
  // Median of G on a 4x4 grid, estimated once from a large plain sample.
  std::vector<double> g(20001);
  for (std::size_t r = 0; r < g.size(); ++r)
    g[r] = point_to_point(sample_grid(n, n, Distribution::exponential(), replicate_seed(9, r)), {0, 0}, {n - 1, n - 1});
  std::nth_element(g.begin(), g.begin() + 10000, g.end());
  const double median = g[10000];

  for (const double theta : {0.0, 0.3, 0.6, 0.9}) {
    const TiltSpec tilt{theta, 0.4};
    CAPTURE(theta);
    const Mc plain_ind = monte_carlo(reps, [&](int r) {
      return point_to_point(sample_grid(n, n, Distribution::exponential(), replicate_seed(3, r)), {0, 0}, {n - 1, n - 1}) > median;
    });
    const Mc tilted_ind = monte_carlo(reps, [&](int r) {
      const auto t = sample_tilted_grid(n, n, tilt, replicate_seed(4, r));
      return (point_to_point(t.grid, {0, 0}, {n - 1, n - 1}) > median) * std::exp(t.log_lr);
    });
    CHECK(agree(plain_ind, tilted_ind, 4));

    const Mc plain_sum = monte_carlo(reps, [&](int r) {
      return sample_grid(n, n, Distribution::exponential(), replicate_seed(5, r)).weights.sum();
    });
    const Mc tilted_sum = monte_carlo(reps, [&](int r) {
      const auto t = sample_tilted_grid(n, n, tilt, replicate_seed(6, r));
      return t.grid.weights.sum() * std::exp(t.log_lr);
    });
    CHECK(agree(plain_sum, tilted_sum, 4));
  }
}

TEST_CASE("binary and csv containers") {
  const auto t = sample_tilted_grid(5, 7, TiltSpec{0.25, 0.75}, 1234);
  std::stringstream buf;
  write_binary(buf, t.grid);
  const EnvGrid back = read_binary(buf);
  CHECK(back.weights == t.grid.weights);
  CHECK(back.law == t.grid.law);
  CHECK(back.seed == 1234);
  CHECK(corridor_log_lr(back) == t.log_lr);

  std::stringstream bad("KPZX");
  CHECK_THROWS_AS(read_binary(bad), Error);

  std::ostringstream csv;
  write_csv(csv, t.grid.weights);
  std::istringstream in(csv.str());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    int c = 0;
    while (std::getline(cells, cell, ',')) {
      CHECK(std::stod(cell) == t.grid.weights(rows, c));
      ++c;
    }
    CHECK(c == 7);
    ++rows;
  }
  CHECK(rows == 5);
}

TEST_CASE("distribution tags parse back") {
  for (const auto& d : {Distribution::exponential(1.5), Distribution::log_gamma(3), Distribution::constant(0)})
    CHECK(Distribution::parse(d.tag()) == d);
  CHECK_THROWS_AS(Distribution::parse("gauss(1)"), Error);
  CHECK_THROWS_AS(Distribution::parse("exponential(-1)"), Error);
  CHECK_THROWS_AS(Distribution::parse("exponential"), Error);
}

TEST_CASE("path tilt: uniform paths and exact likelihood ratio") {
  const TiltSpec tilt{0.4, 0.0, TiltSpec::Shape::path};
  const CellLaw law{Distribution::exponential(), tilt, 3, {3, 3}};
  // Six up-right paths across 3x3, keyed by their rows on antidiagonals 1..3.
  std::map<std::vector<std::int64_t>, int> counts;
  const int draws = 60000;
  for (int r = 0; r < draws; ++r) {
    const auto p = law.tilted_path(replicate_seed(12, r));
    REQUIRE(p.size() == 5);
    CHECK(p.front() == 0);
    CHECK(p.back() == 2);
    for (std::size_t d = 1; d < p.size(); ++d) CHECK((p[d] == p[d - 1] || p[d] == p[d - 1] + 1));
    ++counts[p];
  }
  REQUIRE(counts.size() == 6);
  double chi2 = 0;
  for (const auto& [p, k] : counts) chi2 += (k - draws / 6.0) * (k - draws / 6.0) / (draws / 6.0);
  CHECK(chi2 < 20.5);  // chi-square(5) upper 0.001 point

  // Only the path's cells are tilted; the ratio matches enumeration over the six paths.
  const auto t = sample_tilted_grid(3, 3, tilt, 5);
  const auto plain = sample_grid(3, 3, Distribution::exponential(), 5);
  const auto path = law.tilted_path(5);
  double mix = 0;
  for (const auto& [p, k] : counts) {
    double prod = 1;
    for (std::int64_t d = 0; d < 5; ++d) prod *= 0.6 * std::exp(0.4 * t.grid.weights(p[d], d - p[d]));
    mix += prod / 6;
  }
  CHECK(t.log_lr == doctest::Approx(-std::log(mix)).epsilon(1e-12));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      if (path[r + c] == r) CHECK(t.grid.weights(r, c) == doctest::Approx(plain.weights(r, c) / 0.6).epsilon(1e-15));
      else CHECK(t.grid.weights(r, c) == plain.weights(r, c));
      CHECK(law.weight(5, r, c) == t.grid.weights(r, c));
    }
  CHECK(sample_tilted_grid(3, 3, TiltSpec{0.0, 0.0, TiltSpec::Shape::path}, 5).log_lr == 0.0);

  // A window that is not the core has no path-tilt ratio.
  EnvGrid off = t.grid;
  off.origin = {1, 0};
  CHECK_THROWS_AS(corridor_log_lr(off), Error);

  std::stringstream buf;
  write_binary(buf, t.grid);
  CHECK(read_binary(buf).law == t.grid.law);
}

TEST_CASE("path tilt is unbiased") {
  const int reps = 40000, n = 4;
  const TiltSpec tilt{0.5, 0.0, TiltSpec::Shape::path};
  const Mc one = monte_carlo(reps, [&](int r) { return std::exp(sample_tilted_grid(n, n, tilt, replicate_seed(7, r)).log_lr); });
  CHECK(std::abs(one.mean - 1.0) <= 4 * one.se);
  const Mc plain = monte_carlo(reps, [&](int r) {
    return point_to_point(sample_grid(n, n, Distribution::exponential(), replicate_seed(8, r)), {0, 0}, {n - 1, n - 1}) > 12;
  });
  const Mc tilted = monte_carlo(reps, [&](int r) {
    const auto t = sample_tilted_grid(n, n, tilt, replicate_seed(9, r));
    return (point_to_point(t.grid, {0, 0}, {n - 1, n - 1}) > 12) * std::exp(t.log_lr);
  });
  CHECK(plain.mean > 0);
  CHECK(agree(plain, tilted, 4));
}

TEST_CASE("Philox4x32-10 known answers") {
  using philox::Counter;
  CHECK(philox::generate({0, 0, 0, 0}, {0, 0}) == Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox::generate({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox::generate({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}
