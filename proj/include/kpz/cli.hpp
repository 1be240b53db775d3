#pragma once

#include "kpz/rare.hpp"
#include "kpz/stats.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kpz::cli {

inline constexpr const char* kArtifactVersion = "1.0.0";

enum class Experiment {
  calibrate,
  tail,
  tailratio,
  bridge,
  tent,
  coalesce,
  localize,
  proportion,
  shiftinv,
  exponent,
};

std::string experiment_name(Experiment e);
Experiment parse_experiment(const std::string& name);

/// Every key the runner understands. Serialized as flat `key = value` lines;
/// lists are comma separated, endpoint pairs are `x:y`.
struct ExperimentConfig {
  Experiment experiment = Experiment::tail;
  std::string model = "exp-lpp";
  double beta = kZeroTemperature;
  double shape = 1.0;
  std::int64_t n = 64;
  std::uint64_t seed = 1;
  std::int64_t replicates = 10000;
  std::string scaling = "exact";  // exact | calibrated
  std::int64_t calibration_replicates = 2000;
  std::string conditioning = "rejection";
  double q = 0.5;
  std::optional<double> theta;  // tilted; unset means tuned
  std::string tilt_shape = "path";
  double corridor = 0.5;
  double L = 2.0;
  double delta = 0.5;
  std::vector<double> times{0.5};
  std::int64_t grid_points = 17;
  double window_fraction = 0.25;
  std::optional<double> reference_L;
  double s = 0.5;
  double M = 8.0;
  std::vector<std::int64_t> sizes{64, 128, 256, 512};
  std::vector<EndpointPair> family{{0.0, 0.0}};
  std::vector<EndpointPair> shifted{{0.5, 0.5}};
  std::string output_dir = "kpz-out";
  int threads = 0;  // 0: KPZ_THREADS or the hardware count

  Model parsed_model() const;
  Conditioning parsed_conditioning() const;
  int resolved_threads() const;

  /// Experiment-specific checks; parameter errors name the offending key.
  void validate() const;

  /// All keys, fixed order, 17 significant digits.
  std::string serialize() const;
  std::map<std::string, std::string> entries() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Applies `key = value` lines (blank lines and # comments skipped) on top of
/// `base`. Unknown keys are parameter errors naming the key.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
void set_key(ExperimentConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> known_keys();

struct OutputFile {
  std::string name;  // relative to output_dir
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string artifact_version = kArtifactVersion;
  ExperimentConfig config;
  std::string started, finished;  // UTC, ISO 8601
  std::vector<OutputFile> outputs;
  std::optional<double> threshold_L;
  nlohmann::json verdicts = nlohmann::json::object();

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

inline constexpr const char* kManifestName = "manifest.json";

/// Runs the experiment, writes its outputs under output_dir and the manifest last.
RunManifest run(const ExperimentConfig& config);

RunManifest read_manifest(const std::filesystem::path& path);

struct DigestCheck {
  std::string name;
  std::string expected, actual;  // actual empty when the file is missing
  bool ok() const { return expected == actual; }
};

/// Recomputes the digests of a manifest's files in place.
std::vector<DigestCheck> verify(const std::filesystem::path& manifest_path);

/// Re-runs the manifest's config into `into` (default: a `replay`
/// subdirectory of the original output directory) with an optional thread
/// count, and compares digests. A different artifact version is a replay error.
std::vector<DigestCheck> replay(const std::filesystem::path& manifest_path,
                                std::optional<std::filesystem::path> into = std::nullopt,
                                std::optional<int> threads = std::nullopt);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256(const std::string& bytes);

/// 0 ok, 2 parameter (and replay) errors, 3 insufficient data, 4 internal.
int exit_code(ErrorKind kind);

/// `kpz <experiment> --config FILE [--key value ...]`, `kpz replay MANIFEST`,
/// `kpz verify MANIFEST`. Returns the process exit status.
int main(int argc, const char* const* argv);

}  // namespace kpz::cli
