#pragma once

#include "kpz/env.hpp"

#include <string>

namespace kpz {

/// Environment law plus inverse temperature (kZeroTemperature for LPP).
struct Model {
  enum class Kind { exp_lpp, exp_polymer, log_gamma };

  Kind kind = Kind::exp_lpp;
  double beta = kZeroTemperature;
  double shape = 1.0;  // log-gamma only

  static Model exp_lpp() { return {Kind::exp_lpp, kZeroTemperature, 1.0}; }
  static Model exp_polymer(double beta = 1.0) { return {Kind::exp_polymer, beta, 1.0}; }
  static Model log_gamma(double shape, double beta = 1.0) { return {Kind::log_gamma, beta, shape}; }

  /// "exp-lpp", "exp-polymer" or "log-gamma".
  static Model parse(const std::string& name, double beta, double shape);

  bool zero_temperature() const { return std::isinf(beta); }
  Distribution distribution() const;
  CellLaw law(std::int64_t n) const { return CellLaw{distribution(), std::nullopt, n, {n, n}}; }
  std::string name() const;
  void validate() const;

  friend bool operator==(const Model&, const Model&) = default;
};

}  // namespace kpz
