#include "kpz/polymer.hpp"
#include "oracle.hpp"

#include <doctest.h>

#include <numeric>

using namespace kpz;
using oracle::S;

namespace {

GridXd m2(double a, double b, double c, double d) {
  GridXd g(2, 2);
  g << a, b, c, d;
  return g;
}

GridXd random_grid(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
  return sample_grid(rows, cols, Distribution::exponential(), seed).weights;
}

EnvGrid env(const GridXd& w) { return make_grid(w); }

}  // namespace

TEST_CASE("log_partition_field examples") {
  const auto f = log_partition_field(m2(1, 2, 3, 4), 1.0, S(1, 1));
  CHECK(f(S(2, 2)) == doctest::Approx(8 + std::log1p(std::exp(-1.0))).epsilon(1e-15));
  CHECK(std::abs(f(S(2, 2)) - 8.313262) < 1e-6);

  GridXd one(1, 1);
  one << 1.75;
  CHECK(log_partition_field(one, 2.0, S(1, 1))(S(1, 1)) == 3.5);

  for (int n = 1; n <= 12; ++n) {
    const auto z = log_partition_field(GridXd::Zero(n, n), 1.0, S(1, 1));
    double paths = 1;  // C(2n - 2, n - 1)
    for (int k = 1; k <= n - 1; ++k) paths = paths * (n - 1 + k) / k;
    CHECK(z(S(n, n)) == doctest::Approx(std::log(paths)).epsilon(1e-13));
  }

  CHECK_THROWS_AS(log_partition_field(one, 0.0, S(1, 1)), Error);
  CHECK_THROWS_AS(log_partition_field(one, -1.0, S(1, 1)), Error);
}

TEST_CASE("log_partition_field matches enumeration") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const std::int64_t rows = 1 + seed % 4, cols = 1 + (seed / 4) % 4;
    const double beta = 0.25 + (seed % 7) * 0.5;
    const GridXd g = random_grid(rows, cols, seed + 100);
    const auto f = log_partition_field(g, beta, {0, 0});
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < cols; ++j)
        CHECK(std::abs(f.logz(i, j) - oracle::log_partition(g, beta, {0, 0}, {i, j})) <= 1e-10);
  }
}

TEST_CASE("long double instantiation agrees") {
  const GridXd g = random_grid(6, 6, 77);
  const Grid<long double> gl = g.cast<long double>();
  const auto a = log_partition_field(g, 1.3, {0, 0});
  const auto b = log_partition_field(gl, 1.3L, {0, 0});
  CHECK((a.logz.cast<long double>() - b.logz).cwiseAbs().maxCoeff() < 1e-12L);
  CHECK(passage_field(gl, {0, 0}).values(5, 5) == doctest::Approx(passage_field(g, {0, 0}).values(5, 5)));
}

TEST_CASE("zero-temperature limit") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const GridXd g = random_grid(4, 4, seed);
    const auto z = log_partition_field(g, 64.0, {0, 0});
    const auto p = passage_field(g, {0, 0});
    CHECK(((z.logz / 64.0) - p.values).cwiseAbs().maxCoeff() < 0.1);
  }
}

TEST_CASE("quenched marginal") {
  const auto e = path_ensemble(env(m2(1, 2, 3, 4)), 1.0, S(1, 1), S(2, 2));
  const auto m = quenched_marginal(e, 1);
  CHECK(m.sites == std::vector<Site>{S(2, 1), S(1, 2)});
  CHECK(m(S(2, 1)) == doctest::Approx(1 / (1 + std::exp(-1.0))).epsilon(1e-14));
  CHECK(std::abs(m(S(2, 1)) - 0.731059) < 1e-6);
  CHECK(std::abs(m(S(1, 2)) - 0.268941) < 1e-6);

  GridXd row(1, 5);
  row << 1, 2, 3, 4, 5;
  const auto er = path_ensemble(env(row), 1.0, S(1, 1), S(1, 5));
  for (int d = 1; d <= 3; ++d) {
    const auto mr = quenched_marginal(er, d);
    CHECK(mr.sites.size() == 1);
    CHECK(mr.mass[0] == 1.0);
  }

  CHECK_THROWS_AS(quenched_marginal(e, 0), Error);
  CHECK_THROWS_AS(quenched_marginal(e, 2), Error);
}

TEST_CASE("quenched marginal matches enumeration") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const std::int64_t rows = 2 + seed % 3, cols = 2 + (seed / 3) % 3;
    const double beta = 0.5 + (seed % 5) * 0.4;
    const GridXd g = random_grid(rows, cols, seed + 300);
    const Site a{0, 0}, b{rows - 1, cols - 1};
    const auto e = path_ensemble(env(g), beta, a, b);
    for (std::int64_t d = 1; d < b.antidiagonal(); ++d) {
      const auto m = quenched_marginal(e, d);
      CHECK(std::abs(std::accumulate(m.mass.begin(), m.mass.end(), 0.0) - 1) <= 1e-12);
      for (std::size_t k = 0; k < m.sites.size(); ++k) {
        CHECK(m.sites[k].antidiagonal() == d);
        CHECK(std::abs(m.mass[k] - oracle::visit_probability(g, beta, a, b, m.sites[k])) <= 1e-10);
      }
    }
  }
}

TEST_CASE("sample_path") {
  const auto g = env(m2(1, 2, 3, 4));
  const int reps = 100000;
  int via = 0;
  for (int r = 0; r < reps; ++r) {
    const auto p = sample_path(g, 1.0, S(1, 1), S(2, 2), replicate_seed(17, r));
    CHECK(is_up_right(p));
    via += p.sites[1] == S(2, 1);
  }
  CHECK(std::abs(double(via) / reps - 0.731059) < 0.01);

  GridXd row(1, 4);
  row << 1, 1, 1, 1;
  CHECK(sample_path(env(row), 1.0, S(1, 1), S(1, 4), 5).sites ==
        std::vector<Site>{S(1, 1), S(1, 2), S(1, 3), S(1, 4)});

  const auto big = sample_grid(10, 10, Distribution::exponential(), 3);
  CHECK(sample_path(big, 1.0, {0, 0}, {9, 9}, 8).sites == sample_path(big, 1.0, {0, 0}, {9, 9}, 8).sites);
  CHECK_THROWS_AS(sample_path(big, 1.0, {5, 5}, {4, 9}, 8), Error);
}

namespace {

// Pearson statistic and its upper-tail probability.
double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected_prob, int reps) {
  double stat = 0;
  int df = -1;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    const double e = expected_prob[k] * reps;
    if (e <= 0) continue;
    stat += (observed[k] - e) * (observed[k] - e) / e;
    ++df;
  }
  if (df <= 0) return 1.0;
  // Wilson-Hilferty approximation for the chi-square tail.
  const double z = (std::cbrt(stat / df) - (1 - 2.0 / (9 * df))) / std::sqrt(2.0 / (9 * df));
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

}  // namespace

TEST_CASE("sample_path marginals match quenched marginals") {
  for (const std::int64_t n : {2, 3}) {
    const auto g = sample_grid(n, n, Distribution::exponential(), 40 + n);
    const Site a{0, 0}, b{n - 1, n - 1};
    const auto e = path_ensemble(g, 1.0, a, b);
    const int reps = 40000;
    std::vector<LatticePath> paths;
    for (int r = 0; r < reps; ++r) paths.push_back(sample_path(g, 1.0, a, b, replicate_seed(99, r)));
    for (std::int64_t d = 1; d < b.antidiagonal(); ++d) {
      const auto m = quenched_marginal(e, d);
      std::vector<double> counts(m.sites.size(), 0.0);
      for (const auto& p : paths)
        for (std::size_t k = 0; k < m.sites.size(); ++k) counts[k] += p.at_antidiagonal(d) == m.sites[k];
      CHECK(chi_square_p(counts, m.mass, reps) > 0.001);
    }
  }
}

TEST_CASE("backbone") {
  const auto g = env(m2(1, 2, 3, 4));
  CHECK(backbone(g, 1.0, S(1, 1), S(2, 2), {1}) == std::vector<Site>{S(2, 1)});
  // Flat grids tie only at zero temperature (entropy favors the center otherwise).
  CHECK(backbone(env(GridXd::Ones(4, 4)), kZeroTemperature, S(1, 1), S(4, 4), {1, 2, 3}) ==
        std::vector<Site>{S(2, 1), S(3, 1), S(4, 1)});
  CHECK_THROWS_AS(backbone(g, 1.0, S(1, 1), S(2, 2), {2}), Error);

  std::vector<std::int64_t> ds;
  for (int d = 1; d < 14; ++d) ds.push_back(d);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto w = sample_grid(8, 8, Distribution::exponential(), seed);
    const auto bb = backbone(w, kZeroTemperature, {0, 0}, {7, 7}, ds);
    const auto geo = geodesic(w, {0, 0}, {7, 7});
    bool same = true;
    for (std::size_t k = 0; k < ds.size(); ++k) same &= bb[k] == geo.at_antidiagonal(ds[k]);
    CHECK(same);
  }
}

TEST_CASE("restricted free energy") {
  const auto g = env(m2(1, 2, 3, 4));
  const auto e = path_ensemble(g, 1.0, S(1, 1), S(2, 2));
  const double total = log_partition_field(g, 1.0, S(1, 1))(S(2, 2));
  CHECK(restricted_free_energy(e, 1, {S(2, 1), S(1, 2)}) == doctest::Approx(total).epsilon(1e-15));
  CHECK(restricted_free_energy(e, 1, {S(2, 1)}) == doctest::Approx(8.0).epsilon(1e-15));
  CHECK(restricted_free_energy(e, 1, {S(1, 2)}) <= restricted_free_energy(e, 1, {S(1, 2), S(2, 1)}));
  CHECK_THROWS_AS(restricted_free_energy(e, 1, {}), Error);

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto w = sample_grid(6, 7, Distribution::exponential(), seed);
    const auto pe = path_ensemble(w, 0.8, {0, 0}, {5, 6});
    const double z = pe.in(5, 6);
    for (std::int64_t d = 0; d <= 11; ++d) {
      const auto sites = pe.antidiagonal_sites(d);
      CHECK(restricted_free_energy(pe, d, sites) == doctest::Approx(z).epsilon(1e-13));
      // Partition into two pieces composes by logsumexp.
      if (sites.size() >= 2) {
        const std::vector<Site> left(sites.begin(), sites.begin() + 1), right(sites.begin() + 1, sites.end());
        const double l = restricted_free_energy(pe, d, left), r = restricted_free_energy(pe, d, right);
        CHECK(std::max(l, r) + std::log1p(std::exp(-std::abs(l - r))) == doctest::Approx(z).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("strict positive-temperature quadrangle") {
  int violations = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const GridXd w = random_grid(5, 5, seed + 700);
    const double beta = 1.0;
    const auto z1 = log_partition_field(w, beta, {0, 0});
    const auto z2 = log_partition_field(w, beta, {0, 1 + std::int64_t(seed % 3)});
    const Site y1{4, 3}, y2{4, 4};
    violations += !(z1(y1) + z2(y2) > z1(y2) + z2(y1));
  }
  CHECK(violations == 0);
}
