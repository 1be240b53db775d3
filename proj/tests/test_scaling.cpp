#include "kpz/parallel.hpp"
#include "kpz/scaling.hpp"
#include "kpz/stream.hpp"

#include <doctest.h>

#include <cmath>

using namespace kpz;

TEST_CASE("exact-exponential constants") {
  const auto map = ScalingMap::exact_exponential(256);
  CHECK(map.center() == 1024);
  CHECK(map.height_scale() == doctest::Approx(std::pow(2.0, 4.0 / 3) * std::cbrt(256.0)));
  CHECK(map.space_scale() == doctest::Approx(std::pow(2.0, 5.0 / 3) * std::pow(256.0, 2.0 / 3)));
  CHECK(map.to_rescaled(map.center()) == 0);
  CHECK(map.to_rescaled(map.center() + map.height_scale()) == doctest::Approx(1.0));
  CHECK(map.to_raw(map.to_rescaled(1000.5)) == doctest::Approx(1000.5));
  for (const std::int64_t n : {64, 128, 256, 512})
    CHECK(ScalingMap::exact_exponential(n).space_scale() / std::pow(double(n), 2.0 / 3) ==
          doctest::Approx(std::pow(2.0, 5.0 / 3)));
}

TEST_CASE("site_of anchors, symmetry and round trip") {
  for (const std::int64_t n : {5, 8, 33}) {
    const auto map = ScalingMap::exact_exponential(n);
    CHECK(map.site_of(0, 0) == Site{0, 0});
    CHECK(map.site_of(0, 1) == Site{n - 1, n - 1});
    if (n % 2 == 1) CHECK(map.site_of(0, 0.5) == Site{(n - 1) / 2, (n - 1) / 2});
    for (double s = 0; s <= 1.0; s += 0.125)
      for (double x = 0.013; x < 0.4; x += 0.013) {
        const Site p = map.site_unbounded(x, s), q = map.site_unbounded(-x, s);
        CHECK(p.antidiagonal() == q.antidiagonal());
        CHECK(p.col - p.row == -(q.col - q.row));
      }
    for (std::int64_t r = 0; r < n; ++r)
      for (std::int64_t c = 0; c < n; ++c) CHECK(map.site_of(map.x_of({r, c}), map.s_of({r, c})) == Site{r, c});
    CHECK_THROWS_AS(map.site_of(5.0, 0.5), Error);
    CHECK_THROWS_AS(map.site_of(0.0, 1.5), Error);
  }
  const auto map = ScalingMap::exact_exponential(100);
  CHECK(map.antidiagonal(0.5) == 99);
  CHECK(map.transversal(0.0, 99) == 1);
  CHECK(map.transversal(-1e-9, 99) == -1);
}

TEST_CASE("exact mode: mean rescaled passage near the Tracy-Widom mean") {
  const std::int64_t n = 256, reps = 10000;
  const auto map = ScalingMap::exact_exponential(n);
  const auto law = Model::exp_lpp().law(n);
  std::vector<double> h(reps);
  parallel_for(reps, default_threads(), [&](std::int64_t r) {
    h[r] = map.to_rescaled(stream_terminal(law, kZeroTemperature, n, replicate_seed(2024, r)).value);
  });
  double mean = 0;
  for (double v : h) mean += v / reps;
  CHECK(std::abs(mean - tracy_widom::mean) < 0.10);
}

TEST_CASE("calibration: exponential LPP") {
  const auto rep = calibrate(Model::exp_lpp(), {64, 128, 256, 512}, 2000, 7, default_threads());
  for (const auto& e : rep.entries) {
    CAPTURE(e.n);
    if (e.n >= 256) CHECK(std::abs(e.c / double(e.n) - 4) < 0.05);
    const auto exact = ScalingMap::exact_exponential(e.n);
    CHECK(e.sigma_h == doctest::Approx(exact.height_scale()).epsilon(0.1));
    CHECK(e.sigma_x == doctest::Approx(exact.space_scale()).epsilon(0.1));
  }
  CHECK(std::abs(rep.height_exponent.slope - 1.0 / 3) < 0.05);
  CHECK(std::abs(rep.space_exponent.slope - 2.0 / 3) < 0.07);

  const auto j = rep.to_json();
  for (const char* key : {"model", "n", "c", "sigma_h", "sigma_x", "exponent", "stderr"}) CHECK(j.contains(key));
  const auto back = CalibrationReport::from_json(j);
  CHECK(back.entries.size() == 4);
  CHECK(back.map(256).center() == rep.map(256).center());
  CHECK(back.map(256).mode() == ScalingMode::calibrated);
}

TEST_CASE("calibration: polymer sanity and argument checks") {
  const auto rep = calibrate(Model::exp_polymer(1.0), {32, 64, 128}, 1000, 3, default_threads());
  CHECK(rep.entries[0].c < rep.entries[1].c);
  CHECK(rep.entries[1].c < rep.entries[2].c);
  const double ref = rep.entries[0].sigma_x / std::cbrt(32.0 * 32.0);
  for (const auto& e : rep.entries) CHECK(e.sigma_x / std::cbrt(double(e.n) * e.n) == doctest::Approx(ref).epsilon(0.1));

  CHECK_THROWS_AS(calibrate(Model::exp_lpp(), {64}, 999, 1, 1), Error);
  CHECK_THROWS_AS(calibrate(Model::exp_lpp(), {128, 64}, 1000, 1, 1), Error);
  CHECK_THROWS_AS(calibrate(Model::exp_lpp(), {}, 1000, 1, 1), Error);
}

TEST_CASE("shear pairs") {
  const auto map = ScalingMap::exact_exponential(64);
  const auto zero = shear_pair(map, Model::exp_lpp(), 0.0, 0.1, -0.2, 200, 5, 2);
  CHECK(zero.original == zero.sheared);
  CHECK(shear_correction(0.5, 0, 0, 0, 1) == 0.25);
  CHECK(shear_pair(map, Model::exp_lpp(), 0.5, 0, 0, 1, 1, 1).correction == 0.25);
  CHECK_THROWS_AS(shear_pair(map, Model::exp_lpp(), 50.0, 0, 0, 10, 1, 1), Error);
}

TEST_CASE("parallel_for is deterministic and propagates the first error") {
  std::vector<std::uint64_t> a(1000), b(1000);
  parallel_for(1000, 1, [&](std::int64_t i) { a[i] = replicate_seed(1, i); });
  parallel_for(1000, 8, [&](std::int64_t i) { b[i] = replicate_seed(1, i); });
  CHECK(a == b);
  try {
    parallel_for(500, 4, [&](std::int64_t i) {
      if (i % 100 == 37) fail(ErrorKind::internal, std::to_string(i));
    });
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "37");
  }
}

TEST_CASE("model parsing") {
  CHECK(Model::parse("exp-lpp", kZeroTemperature, 1) == Model::exp_lpp());
  CHECK(Model::parse("exp-polymer", 2.0, 1).beta == 2.0);
  CHECK(Model::parse("log-gamma", 1.0, 3.0).distribution() == Distribution::log_gamma(3.0));
  CHECK_THROWS_AS(Model::parse("exp-polymer", kZeroTemperature, 1), Error);
  CHECK_THROWS_AS(Model::parse("gaussian", 1.0, 1), Error);
}
