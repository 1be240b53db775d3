#include "kpz/cli.hpp"

#include "kpz/io.hpp"
#include "kpz/scaling.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

namespace kpz::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kCalibrationStream = 0x63616c6962;

const std::vector<std::pair<Experiment, const char*>>& experiment_names() {
  static const std::vector<std::pair<Experiment, const char*>> names{
      {Experiment::calibrate, "calibrate"},   {Experiment::tail, "tail"},         {Experiment::tailratio, "tailratio"},
      {Experiment::bridge, "bridge"},         {Experiment::tent, "tent"},         {Experiment::coalesce, "coalesce"},
      {Experiment::localize, "localize"},     {Experiment::proportion, "proportion"},
      {Experiment::shiftinv, "shiftinv"},     {Experiment::exponent, "exponent"}};
  return names;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  fail(ErrorKind::parameter, "key '" + key + "': cannot read '" + value + "' as " + expected);
}

double to_real(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  if (v == "inf" || v == "+inf" || v == "infinity") return kZeroTemperature;
  if (v == "-inf" || v == "-infinity") return -kZeroTemperature;
  double out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size() || std::isnan(out))
    bad_value(key, text, "a real number");
  return out;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  Int out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size()) bad_value(key, text, "an integer");
  return out;
}

std::optional<double> to_optional_real(const std::string& key, const std::string& text) {
  if (trim(text) == "auto") return std::nullopt;
  return to_real(key, text);
}

std::string real_text(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt17(v);
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F&& f) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + f(v[k]);
  return out;
}

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Key>& keys() {
  using C = ExperimentConfig;
  static const std::vector<Key> table{
      {"experiment", [](C& c, const std::string& v) { c.experiment = parse_experiment(trim(v)); },
       [](const C& c) { return experiment_name(c.experiment); }},
      {"model", [](C& c, const std::string& v) { c.model = trim(v); }, [](const C& c) { return c.model; }},
      {"beta", [](C& c, const std::string& v) { c.beta = to_real("beta", v); },
       [](const C& c) { return real_text(c.beta); }},
      {"shape", [](C& c, const std::string& v) { c.shape = to_real("shape", v); },
       [](const C& c) { return real_text(c.shape); }},
      {"n", [](C& c, const std::string& v) { c.n = to_int<std::int64_t>("n", v); },
       [](const C& c) { return std::to_string(c.n); }},
      {"seed", [](C& c, const std::string& v) { c.seed = to_int<std::uint64_t>("seed", v); },
       [](const C& c) { return std::to_string(c.seed); }},
      {"replicates", [](C& c, const std::string& v) { c.replicates = to_int<std::int64_t>("replicates", v); },
       [](const C& c) { return std::to_string(c.replicates); }},
      {"scaling", [](C& c, const std::string& v) { c.scaling = trim(v); }, [](const C& c) { return c.scaling; }},
      {"calibration_replicates",
       [](C& c, const std::string& v) { c.calibration_replicates = to_int<std::int64_t>("calibration_replicates", v); },
       [](const C& c) { return std::to_string(c.calibration_replicates); }},
      {"conditioning", [](C& c, const std::string& v) { c.conditioning = trim(v); },
       [](const C& c) { return c.conditioning; }},
      {"q", [](C& c, const std::string& v) { c.q = to_real("q", v); }, [](const C& c) { return real_text(c.q); }},
      {"theta", [](C& c, const std::string& v) { c.theta = to_optional_real("theta", v); },
       [](const C& c) { return c.theta ? real_text(*c.theta) : std::string("auto"); }},
      {"tilt_shape", [](C& c, const std::string& v) { c.tilt_shape = trim(v); },
       [](const C& c) { return c.tilt_shape; }},
      {"corridor", [](C& c, const std::string& v) { c.corridor = to_real("corridor", v); },
       [](const C& c) { return real_text(c.corridor); }},
      {"L", [](C& c, const std::string& v) { c.L = to_real("L", v); }, [](const C& c) { return real_text(c.L); }},
      {"delta", [](C& c, const std::string& v) { c.delta = to_real("delta", v); },
       [](const C& c) { return real_text(c.delta); }},
      {"times",
       [](C& c, const std::string& v) {
         c.times.clear();
         for (const auto& item : split(v, ',')) c.times.push_back(to_real("times", item));
       },
       [](const C& c) { return join(c.times, real_text); }},
      {"grid_points", [](C& c, const std::string& v) { c.grid_points = to_int<std::int64_t>("grid_points", v); },
       [](const C& c) { return std::to_string(c.grid_points); }},
      {"window_fraction", [](C& c, const std::string& v) { c.window_fraction = to_real("window_fraction", v); },
       [](const C& c) { return real_text(c.window_fraction); }},
      {"reference_L", [](C& c, const std::string& v) { c.reference_L = to_optional_real("reference_L", v); },
       [](const C& c) { return c.reference_L ? real_text(*c.reference_L) : std::string("auto"); }},
      {"s", [](C& c, const std::string& v) { c.s = to_real("s", v); }, [](const C& c) { return real_text(c.s); }},
      {"M", [](C& c, const std::string& v) { c.M = to_real("M", v); }, [](const C& c) { return real_text(c.M); }},
      {"sizes",
       [](C& c, const std::string& v) {
         c.sizes.clear();
         for (const auto& item : split(v, ',')) c.sizes.push_back(to_int<std::int64_t>("sizes", item));
       },
       [](const C& c) { return join(c.sizes, [](std::int64_t v) { return std::to_string(v); }); }},
      {"family", [](C& c, const std::string& v) { c.family = {}; c.family = [&] {
         std::vector<EndpointPair> out;
         for (const auto& item : split(v, ',')) {
           const auto xy = split(item, ':');
           if (xy.size() != 2) bad_value("family", item, "a pair x:y");
           out.push_back({to_real("family", xy[0]), to_real("family", xy[1])});
         }
         return out;
       }(); },
       [](const C& c) { return join(c.family, [](const EndpointPair& p) { return real_text(p.x) + ":" + real_text(p.y); }); }},
      {"shifted", [](C& c, const std::string& v) { c.shifted = [&] {
         std::vector<EndpointPair> out;
         for (const auto& item : split(v, ',')) {
           const auto xy = split(item, ':');
           if (xy.size() != 2) bad_value("shifted", item, "a pair x:y");
           out.push_back({to_real("shifted", xy[0]), to_real("shifted", xy[1])});
         }
         return out;
       }(); },
       [](const C& c) { return join(c.shifted, [](const EndpointPair& p) { return real_text(p.x) + ":" + real_text(p.y); }); }},
      {"output_dir", [](C& c, const std::string& v) { c.output_dir = trim(v); },
       [](const C& c) { return c.output_dir; }},
      {"threads", [](C& c, const std::string& v) { c.threads = to_int<int>("threads", v); },
       [](const C& c) { return std::to_string(c.threads); }},
  };
  return table;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex(const unsigned char* data, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned k = 0; k < len; ++k) {
    out += digits[data[k] >> 4];
    out += digits[data[k] & 15];
  }
  return out;
}

struct DigestContext {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

  DigestContext() {
    require(ctx && EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) == 1, ErrorKind::internal,
            "SHA-256 initialisation failed");
  }
  void update(const char* data, std::size_t len) {
    require(EVP_DigestUpdate(ctx.get(), data, len) == 1, ErrorKind::internal, "SHA-256 update failed");
  }
  std::string finish() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    require(EVP_DigestFinal_ex(ctx.get(), md, &len) == 1, ErrorKind::internal, "SHA-256 finalisation failed");
    return hex(md, len);
  }
};

// Files go only to plain names directly inside the output directory.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    require(!ec, ErrorKind::parameter, "cannot create output_dir '" + root_.string() + "': " + ec.message());
  }

  void write(const std::string& name, const std::string& content) {
    require(!name.empty() && name.find('/') == std::string::npos && name != "." && name != "..",
            ErrorKind::internal, "refusing to write '" + name + "' outside output_dir");
    const fs::path path = root_ / name;
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      require(bool(out), ErrorKind::parameter, "cannot write " + path.string());
      out << content;
      require(bool(out), ErrorKind::internal, "write failed for " + path.string());
    }
    files_.push_back({name, sha256(content), content.size()});
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  template <typename Report>
  void write_csv(const std::string& name, const Report& r) {
    std::ostringstream out;
    r.write_csv(out);
    write(name, out.str());
  }

  const fs::path& root() const { return root_; }
  const std::vector<OutputFile>& files() const { return files_; }

 private:
  fs::path root_;
  std::vector<OutputFile> files_;
};

ScalingMap scaling_map(const ExperimentConfig& c, const Model& model, std::int64_t n, int threads) {
  if (c.scaling == "exact") return ScalingMap::exact_exponential(n);
  return calibrate(model, {n}, c.calibration_replicates, mix64(c.seed ^ kCalibrationStream), threads).map(n);
}

ConditionedEnsemble build_ensemble(const ExperimentConfig& c, const Model& model, const ScalingMap& map, int threads,
                                   OutputDir& out) {
  auto e = condition(model, map, c.parsed_conditioning(), c.L, c.replicates, c.seed, threads);
  out.write_json("ensemble.json", e.manifest());
  std::ostringstream csv;
  e.write_csv(csv);
  out.write("ensemble.csv", csv.str());
  return e;
}

std::vector<double> tent_grid(double L, std::int64_t points) {
  std::vector<double> x;
  const double r = std::sqrt(L);
  for (std::int64_t k = 0; k < points; ++k) x.push_back(points == 1 ? 0.0 : -r + 2 * r * double(k) / double(points - 1));
  return x;
}

}  // namespace

std::string experiment_name(Experiment e) {
  for (const auto& [k, name] : experiment_names())
    if (k == e) return name;
  fail(ErrorKind::internal, "unnamed experiment");
}

Experiment parse_experiment(const std::string& name) {
  for (const auto& [k, n] : experiment_names())
    if (name == n) return k;
  fail(ErrorKind::parameter, "unknown experiment '" + name + "'");
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

void set_key(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : keys())
    if (key == k.name) {
      k.set(config, value);
      return;
    }
  fail(ErrorKind::parameter, "unknown key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::parameter,
            "config line " + std::to_string(number) + " is not of the form key = value");
    set_key(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

std::map<std::string, std::string> ExperimentConfig::entries() const {
  std::map<std::string, std::string> out;
  for (const auto& k : keys()) out[k.name] = k.get(*this);
  return out;
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
  return out;
}

Model ExperimentConfig::parsed_model() const { return Model::parse(model, beta, shape); }

Conditioning ExperimentConfig::parsed_conditioning() const {
  switch (Conditioning::parse_method(conditioning)) {
    case Conditioning::Method::rejection: return Conditioning::rejection();
    case Conditioning::Method::quantile: return Conditioning::quantile(q);
    case Conditioning::Method::tilted: return Conditioning::tilted(theta, parse_shape(tilt_shape), corridor);
  }
  fail(ErrorKind::internal, "unhandled conditioning method");
}

int ExperimentConfig::resolved_threads() const { return threads > 0 ? threads : default_threads(); }

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& key, const std::string& what) {
    require(ok, ErrorKind::parameter, "key '" + key + "': " + what);
  };
  const Model m = parsed_model();
  m.validate();
  need(n >= 1, "n", "must be >= 1");
  need(replicates >= 1, "replicates", "must be >= 1");
  need(threads >= 0, "threads", "must be >= 0");
  need(!output_dir.empty(), "output_dir", "must be set");
  need(scaling == "exact" || scaling == "calibrated", "scaling", "must be exact or calibrated");
  need(scaling == "calibrated" || m.kind == Model::Kind::exp_lpp, "scaling",
       "exact scaling exists only for exp-lpp; use calibrated");
  need(scaling == "exact" || calibration_replicates >= 1000, "calibration_replicates", "must be >= 1000");
  const bool ensemble = experiment == Experiment::bridge || experiment == Experiment::tent ||
                        experiment == Experiment::coalesce || experiment == Experiment::localize ||
                        experiment == Experiment::proportion;
  if (ensemble || experiment == Experiment::tail || experiment == Experiment::tailratio) {
    parsed_conditioning().validate();
  }
  switch (experiment) {
    case Experiment::calibrate:
      need(replicates >= 1000, "replicates", "calibration needs >= 1000");
      need(!sizes.empty() && std::all_of(sizes.begin(), sizes.end(), [](auto v) { return v >= 2; }), "sizes",
           "needs sizes >= 2");
      break;
    case Experiment::tail: need(!std::isnan(L), "L", "must be a number"); break;
    case Experiment::tailratio:
      need(std::isfinite(L) && L >= 0, "L", "must be finite and >= 0");
      need(std::isfinite(delta) && delta >= 0, "delta", "must be finite and >= 0");
      break;
    case Experiment::bridge:
    case Experiment::proportion:
      for (double t : times) need(t > 0 && t < 1, "times", "entries must lie in (0, 1)");
      need(experiment == Experiment::proportion || !times.empty(), "times", "must not be empty");
      need(std::is_sorted(times.begin(), times.end()), "times", "must be increasing");
      break;
    case Experiment::tent: need(grid_points >= 1, "grid_points", "must be >= 1"); break;
    case Experiment::coalesce:
      need(std::isfinite(window_fraction) && window_fraction >= 0, "window_fraction", "must be finite and >= 0");
      need(!reference_L || (std::isfinite(*reference_L) && *reference_L > 0), "reference_L", "must be finite and > 0");
      break;
    case Experiment::localize:
      need(!m.zero_temperature(), "beta", "localize needs a finite beta");
      need(s > 0 && s < 1, "s", "must lie in (0, 1)");
      need(M > 0 && std::isfinite(M), "M", "must be finite and > 0");
      break;
    case Experiment::shiftinv:
      need(!family.empty() && family.size() == shifted.size(), "shifted", "must match family in length");
      break;
    case Experiment::exponent:
      need(m.zero_temperature(), "model", "exponent uses geodesics; needs zero temperature");
      need(sizes.size() >= 3 && std::all_of(sizes.begin(), sizes.end(), [](auto v) { return v >= 2; }), "sizes",
           "needs 3+ sizes >= 2");
      break;
  }
}

json RunManifest::to_json() const {
  json out = json::array();
  for (const auto& f : outputs) out.push_back({{"file", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return {{"artifact_version", artifact_version},
          {"experiment", experiment_name(config.experiment)},
          {"config", config.entries()},
          {"config_text", config.serialize()},
          {"started", started},
          {"finished", finished},
          {"outputs", out},
          {"threshold_L", threshold_L ? json_real(*threshold_L) : json(nullptr)},
          {"verdicts", verdicts}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.artifact_version = j.at("artifact_version").get<std::string>();
  m.config = parse_config(j.at("config_text").get<std::string>());
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  for (const auto& f : j.at("outputs"))
    m.outputs.push_back({f.at("file").get<std::string>(), f.at("sha256").get<std::string>(),
                         f.at("bytes").get<std::uintmax_t>()});
  if (!j.at("threshold_L").is_null()) m.threshold_L = real_from(j["threshold_L"]);
  m.verdicts = j.value("verdicts", json::object());
  return m;
}

std::string sha256(const std::string& bytes) {
  DigestContext d;
  d.update(bytes.data(), bytes.size());
  return d.finish();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorKind::parameter, "cannot read " + path.string());
  DigestContext d;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    d.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return d.finish();
}

RunManifest run(const ExperimentConfig& config) {
  config.validate();
  RunManifest manifest;
  manifest.config = config;
  manifest.started = utc_now();
  OutputDir out(config.output_dir);
  const Model model = config.parsed_model();
  const int threads = config.resolved_threads();
  const ExperimentConfig& c = config;
  json& verdicts = manifest.verdicts;

  switch (c.experiment) {
    case Experiment::calibrate: {
      const auto report = calibrate(model, c.sizes, c.replicates, c.seed, threads);
      out.write_json("calibration.json", report.to_json());
      std::ostringstream csv;
      csv << "n,replicates,median,iqr,c,sigma_h,sigma_x,curvature\n";
      for (const auto& e : report.entries)
        csv << e.n << ',' << e.replicates << ',' << fmt17(e.median) << ',' << fmt17(e.iqr) << ',' << fmt17(e.c) << ','
            << fmt17(e.sigma_h) << ',' << fmt17(e.sigma_x) << ',' << fmt17(e.curvature) << '\n';
      out.write("calibration.csv", csv.str());
      break;
    }
    case Experiment::tail: {
      const ScalingMap map = scaling_map(c, model, c.n, threads);
      const auto t = estimate_tail(model, map, c.L, c.parsed_conditioning(), c.replicates, c.seed, threads);
      json j = t.to_json();
      j["asymptotic"] = std::isfinite(c.L) && c.L > 0 ? json(tracy_widom::tail_asymptotic(c.L)) : json(nullptr);
      out.write_json("tail.json", j);
      out.write("tail.csv", "L,prob,ci_low,ci_high,hits,effective_hits,budget,method\n" + real_text(t.L) + "," +
                                fmt17(t.prob) + "," + fmt17(t.ci_low) + "," + fmt17(t.ci_high) + "," +
                                std::to_string(t.hits) + "," + fmt17(t.effective_hits) + "," +
                                std::to_string(t.budget) + "," + t.method + "\n");
      manifest.threshold_L = c.L;
      break;
    }
    case Experiment::tailratio: {
      const ScalingMap map = scaling_map(c, model, c.n, threads);
      const auto r = tail_ratio(model, map, c.L, c.delta, c.parsed_conditioning(), c.replicates, c.seed, threads);
      out.write_json("tailratio.json", r.to_json());
      out.write("tailratio.csv", "L,delta,ratio,ci_low,ci_high,prediction\n" + fmt17(r.L) + "," + fmt17(r.delta) +
                                     "," + fmt17(r.ratio) + "," + fmt17(r.ci_low) + "," + fmt17(r.ci_high) + "," +
                                     fmt17(r.prediction) + "\n");
      manifest.threshold_L = c.L;
      if (c.L > 1) {
        const double band = std::exp(c.delta * std::pow(c.L, -0.25) * std::log(c.L) * 1.5);
        const double lo = r.prediction / band, hi = r.prediction * band;
        verdicts["ratio_within_band"] = r.ratio >= lo && r.ratio <= hi;
        verdicts["ci_overlaps_band"] = r.ci_low <= hi && lo <= r.ci_high;
      }
      break;
    }
    case Experiment::bridge: {
      const ScalingMap map = scaling_map(c, model, c.n, threads);
      const auto e = build_ensemble(c, model, map, threads, out);
      manifest.threshold_L = e.threshold_L;
      const auto r = bridge_fdd(e, c.times, threads);
      out.write_json("bridge.json", r.to_json());
      out.write_csv("bridge.csv", r);
      for (std::size_t k = 0; k < c.times.size(); ++k)
        if (c.times[k] == 0.5) {
          verdicts["variance_within_30pct"] = std::abs(r.variance(k) / 0.25 - 1) <= 0.3;
          verdicts["ks_p_above_0.01"] = r.ks[k].p_value > 0.01;
        }
      break;
    }
    case Experiment::tent: {
      const ScalingMap map = scaling_map(c, model, c.n, threads);
      const auto e = build_ensemble(c, model, map, threads, out);
      manifest.threshold_L = e.threshold_L;
      const auto r = tent_fit(e, tent_grid(e.threshold_L, c.grid_points), threads);
      out.write_json("tent.json", r.to_json());
      out.write_csv("tent.csv", r);
      verdicts["median_residual_below_5"] = r.median_residual < 5;
      break;
    }
    case Experiment::coalesce: {
      const ScalingMap map = scaling_map(c, model, c.n, threads);
      const auto e = build_ensemble(c, model, map, threads, out);
      manifest.threshold_L = e.threshold_L;
      const auto r = coalescence(e, c.window_fraction, c.reference_L, threads);
      out.write_json("coalescence.json", r.to_json());
      out.write_csv("coalescence.csv", r);
      break;
    }
    case Experiment::localize: {
      const ScalingMap map = scaling_map(c, model, c.n, threads);
      const auto e = build_ensemble(c, model, map, threads, out);
      manifest.threshold_L = e.threshold_L;
      const auto r = localization(e, c.s, c.M, threads);
      out.write_json("localization.json", r.to_json());
      out.write_csv("localization.csv", r);
      verdicts["fraction_below_0.01_at_least_0.9"] = r.fraction_below >= 0.9;
      verdicts["window_covers_antidiagonal"] = r.window_covers_antidiagonal;
      break;
    }
    case Experiment::proportion: {
      const ScalingMap map = scaling_map(c, model, c.n, threads);
      const auto e = build_ensemble(c, model, map, threads, out);
      manifest.threshold_L = e.threshold_L;
      const auto r = proportionality(e, c.times, threads);
      out.write_json("proportionality.json", r.to_json());
      out.write_csv("proportionality.csv", r);
      break;
    }
    case Experiment::shiftinv: {
      const ScalingMap map = scaling_map(c, model, c.n, threads);
      const auto r = shift_invariance(model, map, c.family, c.shifted, c.seed, c.replicates, false, threads);
      out.write_json("shiftinv.json", r.to_json());
      out.write_csv("shiftinv.csv", r);
      verdicts["joint_sum_p_above_0.01"] = r.joint_sum.p_value > 0.01;
      break;
    }
    case Experiment::exponent: {
      std::vector<double> scale, sd;
      std::ostringstream csv;
      csv << "n,replicates,sd_displacement\n";
      for (std::size_t k = 0; k < c.sizes.size(); ++k) {
        const auto m = midpoint_displacement(model, c.sizes[k], c.replicates, replicate_seed(c.seed, k), threads);
        const std::vector<double> w(m.size(), 1.0);
        scale.push_back(double(c.sizes[k]));
        sd.push_back(std::sqrt(weighted_covariance(m, m, w)));
        csv << c.sizes[k] << ',' << c.replicates << ',' << fmt17(sd.back()) << '\n';
      }
      const auto fit = exponent_fit(scale, sd);
      out.write("exponent.csv", csv.str());
      out.write_json("exponent.json", {{"report", "midpoint_exponent"},
                                       {"sizes", c.sizes},
                                       {"sd_displacement", sd},
                                       {"slope", fit.slope},
                                       {"slope_stderr", fit.slope_stderr},
                                       {"target", 2.0 / 3.0}});
      verdicts["slope_within_0.07_of_2/3"] = std::abs(fit.slope - 2.0 / 3.0) <= 0.07;
      break;
    }
  }

  manifest.outputs = out.files();
  manifest.finished = utc_now();
  std::ofstream(out.root() / kManifestName, std::ios::binary | std::ios::trunc) << manifest.to_json().dump(2) << "\n";
  return manifest;
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorKind::parameter, "cannot read manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::parameter, "manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    return RunManifest::from_json(j);
  } catch (const json::exception& e) {
    fail(ErrorKind::parameter, "manifest " + path.string() + " is incomplete: " + e.what());
  }
}

std::vector<DigestCheck> verify(const fs::path& manifest_path) {
  const RunManifest m = read_manifest(manifest_path);
  std::vector<DigestCheck> out;
  for (const auto& f : m.outputs) {
    const fs::path p = manifest_path.parent_path() / f.name;
    out.push_back({f.name, f.sha256, fs::exists(p) ? sha256_file(p) : std::string()});
  }
  return out;
}

std::vector<DigestCheck> replay(const fs::path& manifest_path, std::optional<fs::path> into,
                                std::optional<int> threads) {
  const RunManifest m = read_manifest(manifest_path);
  require(m.artifact_version == kArtifactVersion, ErrorKind::replay,
          "manifest was written by artifact version " + m.artifact_version + ", this is " + kArtifactVersion);
  ExperimentConfig c = m.config;
  c.output_dir = (into ? *into : manifest_path.parent_path() / "replay").string();
  if (threads) c.threads = *threads;
  const RunManifest again = run(c);
  std::vector<DigestCheck> out;
  for (const auto& f : m.outputs) {
    const auto it = std::find_if(again.outputs.begin(), again.outputs.end(),
                                 [&](const OutputFile& g) { return g.name == f.name; });
    out.push_back({f.name, f.sha256, it == again.outputs.end() ? std::string() : it->sha256});
  }
  for (const auto& g : again.outputs)
    if (std::none_of(m.outputs.begin(), m.outputs.end(), [&](const OutputFile& f) { return f.name == g.name; }))
      out.push_back({g.name, std::string(), g.sha256});
  return out;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::insufficient_data: return 3;
    case ErrorKind::internal: return 4;
    default: return 2;
  }
}

namespace {

int report_digests(const std::vector<DigestCheck>& checks, const char* verb) {
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c.ok() ? "ok       " : "MISMATCH ") << c.name << '\n';
    ok = ok && c.ok();
  }
  std::cout << verb << (ok ? ": all digests match\n" : ": digest mismatch\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, const char* const* argv) {
  CLI::App app{"Upper-tail KPZ experiments: run, replay, verify"};
  app.require_subcommand(1);
  std::string config_file;
  std::map<std::string, CLI::App*> runs;
  for (const auto& [kind, name] : experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + std::string(name) + " experiment");
    sub->add_option("--config", config_file, "flat key = value file")->check(CLI::ExistingFile);
    sub->allow_extras();
    runs[name] = sub;
  }
  std::string manifest_path, into;
  int threads = 0;
  auto* rep = app.add_subcommand("replay", "re-run a manifest and compare digests");
  rep->add_option("manifest", manifest_path)->required();
  rep->add_option("--into", into, "directory for the replayed outputs");
  rep->add_option("--threads", threads, "worker threads");
  auto* ver = app.add_subcommand("verify", "check the digests of a manifest's files");
  ver->add_option("manifest", manifest_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (rep->parsed())
      return report_digests(replay(manifest_path, into.empty() ? std::nullopt : std::optional<fs::path>(into),
                                   threads > 0 ? std::optional<int>(threads) : std::nullopt),
                            "replay");
    if (ver->parsed()) return report_digests(verify(manifest_path), "verify");

    for (const auto& [name, sub] : runs) {
      if (!sub->parsed()) continue;
      ExperimentConfig config;
      if (!config_file.empty()) {
        std::ifstream in(config_file);
        std::stringstream text;
        text << in.rdbuf();
        config = parse_config(text.str());
      }
      const auto extras = sub->remaining();
      for (std::size_t k = 0; k < extras.size(); ++k) {
        const std::string& arg = extras[k];
        require(arg.rfind("--", 0) == 0 && arg.size() > 2, ErrorKind::parameter, "unexpected argument '" + arg + "'");
        const auto eq = arg.find('=');
        if (eq != std::string::npos) {
          set_key(config, arg.substr(2, eq - 2), arg.substr(eq + 1));
        } else {
          require(k + 1 < extras.size(), ErrorKind::parameter, "missing value for '" + arg + "'");
          set_key(config, arg.substr(2), extras[++k]);
        }
      }
      config.experiment = parse_experiment(name);
      const RunManifest m = run(config);
      std::cout << "wrote " << m.outputs.size() << " files and " << kManifestName << " to " << config.output_dir
                << '\n';
      if (!m.verdicts.empty()) std::cout << "verdicts " << m.verdicts.dump() << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "kpz: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "kpz: internal error: " << e.what() << '\n';
    return 4;
  }
  return 4;
}

}  // namespace kpz::cli
