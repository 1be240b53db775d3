#pragma once

#include "kpz/model.hpp"
#include "kpz/parallel.hpp"
#include "kpz/scaling.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kpz {

std::string shape_name(TiltSpec::Shape shape);
TiltSpec::Shape parse_shape(const std::string& name);

/// How an ensemble is conditioned on the upper tail.
struct Conditioning {
  enum class Method { rejection, quantile, tilted };

  Method method = Method::rejection;
  double q = 0.5;               // quantile: keep the replicates above the empirical q-quantile
  std::optional<double> theta;  // tilted: nullopt means tuned by a pilot run
  double corridor = 0.5;        // tilted corridor shape: halfwidth in units of n^{2/3}
  TiltSpec::Shape shape = TiltSpec::Shape::path;

  static Conditioning rejection() { return {}; }
  static Conditioning quantile(double q) { return {Method::quantile, q, std::nullopt}; }
  static Conditioning tilted(std::optional<double> theta = std::nullopt,
                             TiltSpec::Shape shape = TiltSpec::Shape::path, double corridor = 0.5) {
    return {Method::tilted, 0.5, theta, corridor, shape};
  }

  /// The tilt before theta is resolved.
  TiltSpec tilt_spec(double theta) const { return {theta, corridor, shape}; }

  std::string name() const;
  static Method parse_method(const std::string& name);
  void validate() const;
  nlohmann::json to_json() const;
  static Conditioning from_json(const nlohmann::json& j);

  friend bool operator==(const Conditioning&, const Conditioning&) = default;
};

struct ConditionedSample {
  std::int64_t replicate = 0;
  double h = 0;           // rescaled terminal height
  double log_weight = 0;  // log importance weight, 0 when untilted

  double weight() const;
  friend bool operator==(const ConditionedSample&, const ConditionedSample&) = default;
};

/// Zero acceptances. acceptance_bound() is the one-sided 95% upper bound 3 / budget.
class EmptyEnsemble : public InsufficientData {
 public:
  EmptyEnsemble(const std::string& what, double bound) : InsufficientData(what, 0.0), bound_(bound) {}
  double acceptance_bound() const { return bound_; }

 private:
  double bound_;
};

struct ConditionedEnsemble {
  Model model;
  ScalingMap map = ScalingMap::exact_exponential(1);
  Conditioning method;
  CellLaw law;  // includes the resolved tilt
  std::uint64_t seed = 0;
  std::int64_t simulated = 0;  // replicates run
  double threshold_L = 0;
  std::vector<ConditionedSample> samples;

  std::int64_t n() const { return map.n(); }
  std::uint64_t seed_of(const ConditionedSample& s) const { return replicate_seed(seed, s.replicate); }
  std::size_t size() const { return samples.size(); }
  bool weighted() const { return method.method == Conditioning::Method::tilted; }
  double acceptance_rate() const;
  /// (sum w)^2 / sum w^2.
  double effective_sample_size() const;
  /// Weights scaled to sum to 1, in sample order.
  std::vector<double> normalized_weights() const;
  /// Samples sorted by replicate index.
  ConditionedEnsemble canonical() const;
  /// The nested sub-ensemble with h > L (threshold raised to L).
  ConditionedEnsemble above(double L) const;

  nlohmann::json manifest() const;
  /// replicate,h,weight,log_weight
  void write_csv(std::ostream& out) const;
  static ConditionedEnsemble load(const nlohmann::json& manifest, std::istream& csv);
};

/// Rescaled terminal heights of replicates 0 .. budget-1 under `law`, and
/// their log likelihood ratios when the law is tilted.
struct TerminalPass {
  std::vector<double> h;
  std::vector<double> log_lr;
};

TerminalPass simulate_terminals(const Model& model, const ScalingMap& map, const CellLaw& law, std::int64_t budget,
                                std::uint64_t seed, int threads = default_threads());

/// `shape` with theta set so the tilted median of h is target_L (bisection on
/// a pilot of `pilot` replicates drawn from a seed stream separate from `seed`).
TiltSpec tune_tilt(const Model& model, const ScalingMap& map, TiltSpec shape, double target_L, std::uint64_t seed,
                   std::int64_t pilot = 256, int threads = default_threads());

/// The cell law a conditioning method samples from.
CellLaw conditioning_law(const Model& model, const ScalingMap& map, const Conditioning& method, double target_L,
                         std::uint64_t seed, int threads = default_threads());

/// Rejection and tilted keep h > target_L out of `budget` replicates;
/// quantile ignores target_L.
ConditionedEnsemble condition(const Model& model, const ScalingMap& map, const Conditioning& method,
                              double target_L, std::int64_t budget, std::uint64_t seed,
                              int threads = default_threads());

/// Quantile ensemble from an existing pass (budget = pass size).
ConditionedEnsemble quantile_ensemble(const Model& model, const ScalingMap& map, const TerminalPass& pass, double q,
                                      std::uint64_t seed);

struct TailEstimate {
  double L = 0;
  double prob = 0;
  double ci_low = 0, ci_high = 0;  // 95%
  std::int64_t hits = 0;
  double effective_hits = 0;
  std::int64_t budget = 0;
  std::string method;

  nlohmann::json to_json() const;
};

/// 95% Wilson score interval for k successes out of n.
std::pair<double, double> wilson_interval(std::int64_t k, std::int64_t n);

/// P(h > L) from a pass: Wilson interval when unweighted, log-normal interval
/// on the weighted mean otherwise. Fewer than 10 effective hits is an error.
TailEstimate tail_from_pass(const TerminalPass& pass, double L, const std::string& method);

TailEstimate estimate_tail(const Model& model, const ScalingMap& map, double L, const Conditioning& method,
                           std::int64_t budget, std::uint64_t seed, int threads = default_threads());

struct TailRatioEstimate {
  double L = 0, delta = 0;
  double ratio = 1;
  double ci_low = 1, ci_high = 1;
  double prediction = 1;
  TailEstimate base, shifted;

  nlohmann::json to_json() const;
};

/// exp(-2 delta sqrt(L)).
double tail_ratio_prediction(double L, double delta);

/// P(h > L + delta) / P(h > L) from one pass (common random numbers).
TailRatioEstimate ratio_from_pass(const TerminalPass& pass, double L, double delta, const std::string& method);

/// Tilted methods tune theta to L.
TailRatioEstimate tail_ratio(const Model& model, const ScalingMap& map, double L, double delta,
                             const Conditioning& method, std::int64_t budget, std::uint64_t seed,
                             int threads = default_threads());

}  // namespace kpz
