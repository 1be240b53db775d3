#include "kpz/rare.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <cmath>
#include <random>
#include <sstream>

using namespace kpz;

namespace {

bool overlap(double a_lo, double a_hi, double b_lo, double b_hi) { return a_lo <= b_hi && b_lo <= a_hi; }

const ScalingMap& map_for(std::int64_t n) {
  static std::map<std::int64_t, ScalingMap> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, calibrate(Model::exp_lpp(), {n}, 2000, 17, default_threads()).map(n)).first;
  return it->second;
}

}  // namespace

TEST_CASE("Wilson interval") {
  auto [lo, hi] = wilson_interval(0, 10);
  CHECK(lo == 0.0);
  CHECK(hi == doctest::Approx(0.2775).epsilon(1e-3));
  std::tie(lo, hi) = wilson_interval(5, 10);
  CHECK(lo == doctest::Approx(0.2366).epsilon(1e-3));
  CHECK(hi == doctest::Approx(0.7634).epsilon(1e-3));
  CHECK_THROWS_AS(wilson_interval(3, 2), Error);
}

TEST_CASE("trivial conditioning") {
  const auto& map = map_for(16);
  const auto all = condition(Model::exp_lpp(), map, Conditioning::rejection(), -INFINITY, 500, 3, 2);
  CHECK(all.acceptance_rate() == 1.0);
  CHECK(all.size() == 500);
  CHECK(all.effective_sample_size() == doctest::Approx(500));
  const auto pass = simulate_terminals(Model::exp_lpp(), map, Model::exp_lpp().law(16), 500, 3, 1);
  for (const auto& s : all.samples) CHECK(s.h == pass.h[s.replicate]);

  // q = 1/2 on an even budget: the threshold is the sample median.
  const auto half = condition(Model::exp_lpp(), map, Conditioning::quantile(0.5), 0.0, 1000, 4, 3);
  auto h = simulate_terminals(Model::exp_lpp(), map, Model::exp_lpp().law(16), 1000, 4, 1).h;
  std::sort(h.begin(), h.end());
  CHECK(half.threshold_L == 0.5 * (h[499] + h[500]));
  CHECK(half.size() == 500);
  for (const auto& s : half.samples) {
    CHECK(s.h > half.threshold_L);
    CHECK(s.log_weight == 0.0);
  }

  try {
    condition(Model::exp_lpp(), map, Conditioning::rejection(), 50.0, 200, 1, 1);
    CHECK(false);
  } catch (const EmptyEnsemble& e) {
    CHECK(e.acceptance_bound() == doctest::Approx(3.0 / 200));
    CHECK(e.kind() == ErrorKind::insufficient_data);
  }
  CHECK_THROWS_AS(condition(Model::exp_lpp(), map, Conditioning::quantile(1.0), 0, 10, 1, 1), Error);
  CHECK_THROWS_AS(condition(Model::exp_lpp(), map, Conditioning::rejection(), 0, 0, 1, 1), Error);
}

TEST_CASE("ensemble invariants, persistence and sub-ensembles") {
  const auto& map = map_for(32);
  const auto e = condition(Model::exp_lpp(), map, Conditioning::tilted(), 1.0, 3000, 21, default_threads());
  REQUIRE(e.law.tilt);
  CHECK(e.weighted());
  CHECK(e.size() > 100);
  CHECK(e.effective_sample_size() <= double(e.size()) + 1e-9);
  for (const auto& s : e.samples) CHECK(s.h > 1.0);
  const auto w = e.normalized_weights();
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0));

  std::stringstream csv;
  e.write_csv(csv);
  const auto manifest = nlohmann::json::parse(e.manifest().dump());
  const auto back = ConditionedEnsemble::load(manifest, csv);
  CHECK(back.samples == e.samples);
  CHECK(back.law == e.law);
  CHECK(back.method == e.method);
  CHECK(back.threshold_L == e.threshold_L);
  CHECK(manifest["seeds"][0].get<std::uint64_t>() == e.seed_of(e.samples[0]));

  const auto sub = e.above(1.5);
  CHECK(sub.threshold_L == 1.5);
  for (const auto& s : sub.samples) CHECK(s.h > 1.5);
  CHECK_THROWS_AS(sub.above(1.0), Error);

  // Thread count never changes a pass.
  const auto a = simulate_terminals(Model::exp_lpp(), map, e.law, 300, 5, 1);
  const auto b = simulate_terminals(Model::exp_lpp(), map, e.law, 300, 5, 4);
  CHECK(a.h == b.h);
  CHECK(a.log_lr == b.log_lr);
}

TEST_CASE("pilot tuning hits the target median") {
  const auto& map = map_for(32);
  const auto tilt = tune_tilt(Model::exp_lpp(), map, Conditioning::tilted().tilt_spec(0), 2.0, 9, 256, 2);
  CHECK(tilt.theta > 0);
  CHECK(tilt.theta < 1);
  CellLaw law = Model::exp_lpp().law(32);
  law.tilt = tilt;
  auto h = simulate_terminals(Model::exp_lpp(), map, law, 2001, 1234, 2).h;
  std::nth_element(h.begin(), h.begin() + 1000, h.end());
  CHECK(std::abs(h[1000] - 2.0) < 0.25);
  CHECK(tune_tilt(Model::exp_lpp(), map, tilt, -5.0, 9, 64, 1).theta == 0.0);
  CHECK_THROWS_AS(tune_tilt(Model::log_gamma(2.0), map, tilt, 1.0, 9, 64, 1), Error);
}

TEST_CASE("tail estimates: trivial cases, nesting, errors") {
  const auto& map = map_for(32);
  const auto one = estimate_tail(Model::exp_lpp(), map, -INFINITY, Conditioning::rejection(), 10, 1, 1);
  CHECK(one.prob == 1.0);
  const auto pass = simulate_terminals(Model::exp_lpp(), map, Model::exp_lpp().law(32), 400000, 77, default_threads());
  const auto at2 = tail_from_pass(pass, 2.0, "rejection");
  const auto at25 = tail_from_pass(pass, 2.5, "rejection");
  CHECK(at2.prob >= at25.prob);
  CHECK(at2.ci_low <= at2.prob);
  CHECK(at2.prob <= at2.ci_high);
  try {
    tail_from_pass(pass, 6.0, "rejection");
    CHECK(false);
  } catch (const InsufficientData& e) {
    CHECK(e.achieved() < 10);
  }

  const auto same = ratio_from_pass(pass, 2.0, 0.0, "rejection");
  CHECK(same.ratio == 1.0);
  const auto r = ratio_from_pass(pass, 2.0, 0.5, "rejection");
  CHECK(r.ratio == doctest::Approx(double(r.shifted.hits) / double(r.base.hits)));
  CHECK(r.ci_low <= r.ratio);
  CHECK(r.ratio <= r.ci_high);
  CHECK_THROWS_AS(ratio_from_pass(pass, 2.0, -0.1, "rejection"), Error);

  CHECK(tail_ratio_prediction(4, 0.5) == doctest::Approx(std::exp(-2.0)));
  CHECK(tail_ratio_prediction(4, 0.5) == doctest::Approx(0.1353).epsilon(1e-3));
  CHECK(tail_ratio_prediction(4, 0.6) < tail_ratio_prediction(4, 0.5));
  CHECK(tail_ratio_prediction(5, 0.5) < tail_ratio_prediction(4, 0.5));
  CHECK(tail_ratio_prediction(4, 0.0) == 1.0);
  CHECK(tracy_widom::tail_asymptotic(4) == doctest::Approx(2.9e-8).epsilon(0.02));
}

TEST_CASE("tilted and rejection estimates agree at n = 128, L = 2") {
  const auto& map = map_for(128);
  const auto plain = estimate_tail(Model::exp_lpp(), map, 2.0, Conditioning::rejection(), 500000, 31, default_threads());
  const auto tilted = estimate_tail(Model::exp_lpp(), map, 2.0, Conditioning::tilted(), 20000, 32, default_threads());
  CAPTURE(plain.to_json().dump());
  CAPTURE(tilted.to_json().dump());
  CHECK(overlap(plain.ci_low, plain.ci_high, tilted.ci_low, tilted.ci_high));
}

TEST_CASE("estimator cross-validation at n = 64") {
  const auto& map = map_for(64);
  const Model m = Model::exp_lpp();
  const std::int64_t budget = 1000000;
  const auto rej = simulate_terminals(m, map, m.law(64), budget, 41, default_threads());
  const auto quant = quantile_ensemble(m, map, simulate_terminals(m, map, m.law(64), budget, 42, default_threads()),
                                       0.99, 42);
  for (const double L : {1.0, 2.0}) {
    CAPTURE(L);
    const auto a = tail_from_pass(rej, L, "rejection");
    // Quantile-derived: the q-ensemble's share of the budget above L (L above its threshold).
    REQUIRE(L >= quant.threshold_L);
    const auto k = static_cast<std::int64_t>(quant.above(L).size());
    const auto [b_lo, b_hi] = wilson_interval(k, quant.simulated);
    const auto c = estimate_tail(m, map, L, Conditioning::tilted(), budget / 10, 43, default_threads());
    CAPTURE(a.to_json().dump());
    CAPTURE(c.to_json().dump());
    CHECK(overlap(a.ci_low, a.ci_high, b_lo, b_hi));
    CHECK(overlap(a.ci_low, a.ci_high, c.ci_low, c.ci_high));
    CHECK(overlap(b_lo, b_hi, c.ci_low, c.ci_high));
  }
}
