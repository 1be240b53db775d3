#include "kpz/model.hpp"

#include "kpz/parallel.hpp"

#include <cstdlib>

namespace kpz {

Model Model::parse(const std::string& name, double beta, double shape) {
  Model m;
  if (name == "exp-lpp") m = exp_lpp();
  else if (name == "exp-polymer") m = exp_polymer(beta);
  else if (name == "log-gamma") m = log_gamma(shape, beta);
  else fail(ErrorKind::parameter, "unknown model '" + name + "'");
  m.validate();
  return m;
}

Distribution Model::distribution() const {
  return kind == Kind::log_gamma ? Distribution::log_gamma(shape) : Distribution::exponential(1.0);
}

std::string Model::name() const {
  switch (kind) {
    case Kind::exp_lpp: return "exp-lpp";
    case Kind::exp_polymer: return "exp-polymer";
    case Kind::log_gamma: return "log-gamma";
  }
  return "?";
}

void Model::validate() const {
  require(beta > 0, ErrorKind::parameter, "beta must be > 0");
  if (kind == Kind::exp_lpp)
    require(zero_temperature(), ErrorKind::parameter, "exp-lpp is the zero-temperature model");
  else
    require(!zero_temperature(), ErrorKind::parameter, name() + " needs a finite beta");
  distribution().validate();
}

int default_threads() {
  if (const char* env = std::getenv("KPZ_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace kpz
