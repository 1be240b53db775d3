#include "kpz/rare.hpp"

#include "kpz/io.hpp"
#include "kpz/stream.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace kpz {

namespace {

constexpr double kZ95 = 1.959963984540054;
constexpr std::int64_t kMinHits = 10;
constexpr double kMaxTheta = 0.98;

bool is_neg_inf(double L) { return std::isinf(L) && L < 0; }

nlohmann::json model_json(const Model& m) {
  return {{"name", m.name()}, {"beta", json_real(m.beta)}, {"shape", m.shape}};
}

Model model_from(const nlohmann::json& j) {
  return Model::parse(j.at("name").get<std::string>(), real_from(j.at("beta")), j.at("shape").get<double>());
}

}  // namespace

std::string shape_name(TiltSpec::Shape shape) { return shape == TiltSpec::Shape::path ? "path" : "corridor"; }

TiltSpec::Shape parse_shape(const std::string& name) {
  if (name == "path") return TiltSpec::Shape::path;
  if (name == "corridor") return TiltSpec::Shape::corridor;
  fail(ErrorKind::parameter, "unknown tilt shape '" + name + "'");
}

std::string Conditioning::name() const {
  switch (method) {
    case Method::rejection: return "rejection";
    case Method::quantile: return "quantile";
    case Method::tilted: return "tilted";
  }
  return "?";
}

Conditioning::Method Conditioning::parse_method(const std::string& name) {
  if (name == "rejection") return Method::rejection;
  if (name == "quantile") return Method::quantile;
  if (name == "tilted") return Method::tilted;
  fail(ErrorKind::parameter, "unknown conditioning method '" + name + "'");
}

void Conditioning::validate() const {
  if (method == Method::quantile) require(q > 0 && q < 1, ErrorKind::parameter, "quantile q must lie in (0, 1)");
  if (method == Method::tilted) {
    require(!theta || (*theta >= 0 && *theta < 1), ErrorKind::parameter, "tilt theta must lie in [0, 1)");
    require(corridor >= 0 && std::isfinite(corridor), ErrorKind::parameter, "corridor halfwidth must be >= 0");
  }
}

nlohmann::json Conditioning::to_json() const {
  nlohmann::json j{{"method", name()}};
  if (method == Method::quantile) j["q"] = q;
  if (method == Method::tilted) {
    j["theta"] = theta ? nlohmann::json(*theta) : nlohmann::json("auto");
    j["shape"] = shape_name(shape);
    j["corridor"] = corridor;
  }
  return j;
}

Conditioning Conditioning::from_json(const nlohmann::json& j) {
  Conditioning c;
  c.method = parse_method(j.at("method").get<std::string>());
  if (c.method == Method::quantile) c.q = j.at("q").get<double>();
  if (c.method == Method::tilted) {
    const auto& t = j.at("theta");
    if (!t.is_string()) c.theta = t.get<double>();
    c.shape = parse_shape(j.at("shape").get<std::string>());
    c.corridor = j.at("corridor").get<double>();
  }
  c.validate();
  return c;
}

double ConditionedSample::weight() const { return std::exp(log_weight); }

double ConditionedEnsemble::acceptance_rate() const {
  return simulated == 0 ? 0.0 : double(samples.size()) / double(simulated);
}

std::vector<double> ConditionedEnsemble::normalized_weights() const {
  std::vector<double> w(samples.size(), 1.0);
  if (samples.empty()) return w;
  double top = samples[0].log_weight;
  for (const auto& s : samples) top = std::max(top, s.log_weight);
  double total = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    w[i] = std::exp(samples[i].log_weight - top);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

double ConditionedEnsemble::effective_sample_size() const {
  if (samples.empty()) return 0;
  const auto w = normalized_weights();
  double sq = 0;
  for (double v : w) sq += v * v;
  return 1.0 / sq;
}

ConditionedEnsemble ConditionedEnsemble::canonical() const {
  ConditionedEnsemble out = *this;
  std::sort(out.samples.begin(), out.samples.end(),
            [](const ConditionedSample& a, const ConditionedSample& b) { return a.replicate < b.replicate; });
  return out;
}

ConditionedEnsemble ConditionedEnsemble::above(double L) const {
  require(L >= threshold_L, ErrorKind::parameter, "a sub-ensemble threshold cannot be lowered");
  ConditionedEnsemble out = *this;
  out.threshold_L = L;
  out.samples.clear();
  for (const auto& s : samples)
    if (s.h > L) out.samples.push_back(s);
  return out;
}

nlohmann::json ConditionedEnsemble::manifest() const {
  nlohmann::json j;
  j["model"] = model_json(model);
  j["map"] = map.to_json();
  j["method"] = method.to_json();
  j["tilt"] = law.tilt ? nlohmann::json{{"theta", law.tilt->theta},
                                         {"shape", shape_name(law.tilt->shape)},
                                         {"corridor", law.tilt->corridor_halfwidth}}
                       : nlohmann::json(nullptr);
  j["seed"] = seed;
  j["simulated"] = simulated;
  j["threshold_L"] = json_real(threshold_L);
  j["samples"] = samples.size();
  j["acceptance_rate"] = acceptance_rate();
  j["effective_sample_size"] = effective_sample_size();
  auto& seeds = j["seeds"] = nlohmann::json::array();
  for (const auto& s : samples) seeds.push_back(seed_of(s));
  return j;
}

void ConditionedEnsemble::write_csv(std::ostream& out) const {
  out << "replicate,h,weight,log_weight\n";
  for (const auto& s : samples)
    out << s.replicate << ',' << fmt17(s.h) << ',' << fmt17(s.weight()) << ',' << fmt17(s.log_weight) << '\n';
}

ConditionedEnsemble ConditionedEnsemble::load(const nlohmann::json& j, std::istream& csv) {
  ConditionedEnsemble e;
  e.model = model_from(j.at("model"));
  e.map = ScalingMap::from_json(j.at("map"));
  e.method = Conditioning::from_json(j.at("method"));
  e.law = e.model.law(e.map.n());
  if (!j.at("tilt").is_null())
    e.law.tilt = TiltSpec{j["tilt"].at("theta").get<double>(), j["tilt"].at("corridor").get<double>(),
                          parse_shape(j["tilt"].at("shape").get<std::string>())};
  e.seed = j.at("seed").get<std::uint64_t>();
  e.simulated = j.at("simulated").get<std::int64_t>();
  e.threshold_L = real_from(j.at("threshold_L"));

  std::string line;
  require(static_cast<bool>(std::getline(csv, line)) && line == "replicate,h,weight,log_weight",
          ErrorKind::parameter, "ensemble CSV header mismatch");
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field[4];
    for (auto& f : field) std::getline(row, f, ',');
    e.samples.push_back({std::stoll(field[0]), std::stod(field[1]), std::stod(field[3])});
  }
  require(e.samples.size() == j.at("samples").get<std::size_t>(), ErrorKind::parameter,
          "ensemble CSV row count does not match the manifest");
  return e;
}

TerminalPass simulate_terminals(const Model& model, const ScalingMap& map, const CellLaw& law, std::int64_t budget,
                                std::uint64_t seed, int threads) {
  require(budget >= 1, ErrorKind::parameter, "budget must be >= 1");
  law.validate();
  const std::int64_t n = map.n();
  TerminalPass pass;
  pass.h.resize(budget);
  if (law.tilt) pass.log_lr.resize(budget);
  parallel_for(budget, threads, [&](std::int64_t r) {
    const auto res = stream_terminal(law, model.beta, n, replicate_seed(seed, std::uint64_t(r)));
    pass.h[r] = map.to_rescaled(res.value);
    if (law.tilt) pass.log_lr[r] = res.log_lr;
  });
  return pass;
}

TiltSpec tune_tilt(const Model& model, const ScalingMap& map, TiltSpec shape, double target_L, std::uint64_t seed,
                   std::int64_t pilot, int threads) {
  require(model.distribution().kind == Distribution::Kind::exponential, ErrorKind::parameter,
          "tilting requires an exponential environment");
  require(pilot >= 16, ErrorKind::parameter, "pilot needs at least 16 replicates");
  const std::uint64_t pilot_seed = mix64(seed ^ 0x70696c6f74ull);
  auto median_at = [&](double theta) {
    CellLaw law = model.law(map.n());
    law.tilt = shape;
    law.tilt->theta = theta;
    auto h = simulate_terminals(model, map, law, pilot, pilot_seed, threads).h;
    std::nth_element(h.begin(), h.begin() + pilot / 2, h.end());
    return h[pilot / 2];
  };
  auto with = [&](double theta) {
    shape.theta = theta;
    return shape;
  };
  if (median_at(0.0) >= target_L) return with(0.0);
  if (median_at(kMaxTheta) < target_L) return with(kMaxTheta);
  // h is nondecreasing in theta per replicate.
  double lo = 0.0, hi = kMaxTheta;
  for (int it = 0; it < 16; ++it) {
    const double mid = 0.5 * (lo + hi);
    (median_at(mid) < target_L ? lo : hi) = mid;
  }
  return with(hi);
}

CellLaw conditioning_law(const Model& model, const ScalingMap& map, const Conditioning& method, double target_L,
                         std::uint64_t seed, int threads) {
  CellLaw law = model.law(map.n());
  if (method.method != Conditioning::Method::tilted) return law;
  if (method.theta) law.tilt = method.tilt_spec(*method.theta);
  else law.tilt = tune_tilt(model, map, method.tilt_spec(0.0), target_L, seed, 256, threads);
  return law;
}

ConditionedEnsemble quantile_ensemble(const Model& model, const ScalingMap& map, const TerminalPass& pass, double q,
                                      std::uint64_t seed) {
  require(q > 0 && q < 1, ErrorKind::parameter, "quantile q must lie in (0, 1)");
  require(pass.log_lr.empty(), ErrorKind::parameter, "quantile conditioning needs an untilted pass");
  const auto budget = static_cast<std::int64_t>(pass.h.size());
  const auto below = static_cast<std::int64_t>(std::floor(q * double(budget)));
  if (below < 1 || below >= budget)
    throw InsufficientData("budget too small to split at quantile " + fmt17(q), double(budget));

  // Threshold halfway between the largest value below the split and the smallest above it.
  std::vector<double> v = pass.h;
  std::nth_element(v.begin(), v.begin() + below, v.end());
  const double upper = v[below];
  const double lower = *std::max_element(v.begin(), v.begin() + below);

  ConditionedEnsemble e;
  e.model = model;
  e.map = map;
  e.method = Conditioning::quantile(q);
  e.law = model.law(map.n());
  e.seed = seed;
  e.simulated = budget;
  e.threshold_L = 0.5 * (lower + upper);
  for (std::int64_t r = 0; r < budget; ++r)
    if (pass.h[r] > e.threshold_L) e.samples.push_back({r, pass.h[r], 0.0});
  return e;
}

ConditionedEnsemble condition(const Model& model, const ScalingMap& map, const Conditioning& method,
                              double target_L, std::int64_t budget, std::uint64_t seed, int threads) {
  model.validate();
  method.validate();
  require(budget >= 1, ErrorKind::parameter, "budget must be >= 1");
  require(map.n() >= 1, ErrorKind::parameter, "lattice size must be >= 1");

  const CellLaw law = conditioning_law(model, map, method, target_L, seed, threads);
  const TerminalPass pass = simulate_terminals(model, map, law, budget, seed, threads);
  if (method.method == Conditioning::Method::quantile) return quantile_ensemble(model, map, pass, method.q, seed);

  ConditionedEnsemble e;
  e.model = model;
  e.map = map;
  e.method = method;
  e.law = law;
  e.seed = seed;
  e.simulated = budget;
  e.threshold_L = target_L;
  for (std::int64_t r = 0; r < budget; ++r)
    if (pass.h[r] > target_L) e.samples.push_back({r, pass.h[r], pass.log_lr.empty() ? 0.0 : pass.log_lr[r]});
  if (e.samples.empty())
    throw EmptyEnsemble("no replicate exceeded L = " + fmt17(target_L) + " in " + std::to_string(budget) +
                            " draws; acceptance rate < " + fmt17(3.0 / double(budget)) + " (95%)",
                        3.0 / double(budget));
  return e;
}

std::pair<double, double> wilson_interval(std::int64_t k, std::int64_t n) {
  require(n >= 1 && k >= 0 && k <= n, ErrorKind::parameter, "Wilson interval needs 0 <= k <= n, n >= 1");
  const double p = double(k) / double(n), z2 = kZ95 * kZ95, nn = double(n);
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = kZ95 * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

nlohmann::json TailEstimate::to_json() const {
  return {{"L", json_real(L)},        {"prob", prob},     {"ci_low", ci_low},
          {"ci_high", ci_high},       {"hits", hits},     {"effective_hits", effective_hits},
          {"budget", budget},         {"method", method}};
}

TailEstimate tail_from_pass(const TerminalPass& pass, double L, const std::string& method) {
  TailEstimate t;
  t.L = L;
  t.method = method;
  t.budget = static_cast<std::int64_t>(pass.h.size());
  require(t.budget >= 1, ErrorKind::parameter, "empty pass");
  if (is_neg_inf(L)) {
    t.prob = t.ci_low = t.ci_high = 1.0;
    t.hits = t.budget;
    t.effective_hits = double(t.budget);
    return t;
  }
  if (pass.log_lr.empty()) {
    t.hits = std::count_if(pass.h.begin(), pass.h.end(), [L](double h) { return h > L; });
    t.effective_hits = double(t.hits);
    if (t.hits < kMinHits)
      throw InsufficientData("only " + std::to_string(t.hits) + " hits above L = " + fmt17(L), double(t.hits));
    t.prob = double(t.hits) / double(t.budget);
    std::tie(t.ci_low, t.ci_high) = wilson_interval(t.hits, t.budget);
    return t;
  }
  double sum = 0, sum2 = 0;
  for (std::int64_t r = 0; r < t.budget; ++r) {
    if (!(pass.h[r] > L)) continue;
    const double y = std::exp(pass.log_lr[r]);
    ++t.hits;
    sum += y;
    sum2 += y * y;
  }
  t.effective_hits = sum2 > 0 ? sum * sum / sum2 : 0.0;
  if (t.effective_hits < double(kMinHits))
    throw InsufficientData("only " + fmt17(t.effective_hits) + " effective hits above L = " + fmt17(L),
                           t.effective_hits);
  const double nn = double(t.budget);
  t.prob = sum / nn;
  const double var = std::max(0.0, (sum2 - nn * t.prob * t.prob) / (nn - 1));
  const double sd_log = std::sqrt(var / nn) / t.prob;
  t.ci_low = t.prob * std::exp(-kZ95 * sd_log);
  t.ci_high = t.prob * std::exp(kZ95 * sd_log);
  return t;
}

TailEstimate estimate_tail(const Model& model, const ScalingMap& map, double L, const Conditioning& method,
                           std::int64_t budget, std::uint64_t seed, int threads) {
  model.validate();
  method.validate();
  require(budget >= 1, ErrorKind::parameter, "budget must be >= 1");
  if (is_neg_inf(L)) return tail_from_pass(TerminalPass{std::vector<double>(budget, 0.0), {}}, L, method.name());
  const CellLaw law = conditioning_law(model, map, method, L, seed, threads);
  return tail_from_pass(simulate_terminals(model, map, law, budget, seed, threads), L, method.name());
}

double tail_ratio_prediction(double L, double delta) { return std::exp(-2 * delta * std::sqrt(L)); }

nlohmann::json TailRatioEstimate::to_json() const {
  return {{"L", json_real(L)},       {"delta", delta},         {"ratio", ratio},
          {"ci_low", ci_low},        {"ci_high", ci_high},     {"prediction", prediction},
          {"base", base.to_json()},  {"shifted", shifted.to_json()}};
}

TailRatioEstimate ratio_from_pass(const TerminalPass& pass, double L, double delta, const std::string& method) {
  require(delta >= 0 && std::isfinite(delta), ErrorKind::parameter, "delta must be finite and >= 0");
  require(L >= 0 && std::isfinite(L), ErrorKind::parameter, "tail ratio needs a finite L >= 0");
  TailRatioEstimate r;
  r.L = L;
  r.delta = delta;
  r.prediction = tail_ratio_prediction(L, delta);
  r.base = tail_from_pass(pass, L, method);
  if (delta == 0) {
    r.shifted = r.base;
    return r;
  }
  r.shifted = tail_from_pass(pass, L + delta, method);
  r.ratio = r.shifted.prob / r.base.prob;
  if (pass.log_lr.empty()) {
    // Given the base hits, the shifted hits are binomial with success probability = ratio.
    std::tie(r.ci_low, r.ci_high) = wilson_interval(r.shifted.hits, r.base.hits);
    return r;
  }
  const double nn = double(pass.h.size());
  double sa = 0, saa = 0, sb = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < pass.h.size(); ++i) {
    if (!(pass.h[i] > L)) continue;
    const double y = std::exp(pass.log_lr[i]);
    const double a = pass.h[i] > L + delta ? y : 0.0;
    sa += a;
    saa += a * a;
    sb += y;
    sbb += y * y;
    sab += a * y;
  }
  const double ma = sa / nn, mb = sb / nn;
  const double va = (saa - nn * ma * ma) / (nn - 1), vb = (sbb - nn * mb * mb) / (nn - 1);
  const double cab = (sab - nn * ma * mb) / (nn - 1);
  const double var_log = std::max(0.0, (va / (ma * ma) + vb / (mb * mb) - 2 * cab / (ma * mb)) / nn);
  r.ci_low = r.ratio * std::exp(-kZ95 * std::sqrt(var_log));
  r.ci_high = r.ratio * std::exp(kZ95 * std::sqrt(var_log));
  return r;
}

TailRatioEstimate tail_ratio(const Model& model, const ScalingMap& map, double L, double delta,
                             const Conditioning& method, std::int64_t budget, std::uint64_t seed, int threads) {
  model.validate();
  method.validate();
  require(delta >= 0 && std::isfinite(delta), ErrorKind::parameter, "delta must be finite and >= 0");
  require(budget >= 1, ErrorKind::parameter, "budget must be >= 1");
  const CellLaw law = conditioning_law(model, map, method, L, seed, threads);
  return ratio_from_pass(simulate_terminals(model, map, law, budget, seed, threads), L, delta, method.name());
}

}  // namespace kpz
