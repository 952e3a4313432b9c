#pragma once

#include "cvdm/dataset.hpp"
#include "cvdm/denoiser.hpp"
#include "cvdm/metrics.hpp"
#include "cvdm/sampler.hpp"
#include "cvdm/schedule.hpp"
#include "cvdm/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvdm {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConvergenceConfig {
  std::vector<int> steps = {16, 32, 64, 128, 256};
  double delta = 0.1;
  double sigmoid_k = 20.0;
  double log_snr_hi = 3.0;
  double log_snr_lo = -3.0;
};

struct PathsConfig {
  std::string data_dir = "data";
  std::string run_dir = "run";
};

/// Whole run description. Channel counts of the models follow from the data
/// section (kind and layout), so they are not configurable on their own.
struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig data;
  LearnedScheduleConfig schedule;
  DenoiserConfig denoiser;
  TrainConfig train;
  SamplerConfig sampler;
  metrics::MetricsConfig metrics;
  ConvergenceConfig convergence;
  PathsConfig paths;

  [[nodiscard]] int x_channels() const;
  [[nodiscard]] int y_channels() const { return 1; }
  /// Fills the derived channel counts and seeds into the sections.
  void finalize();
};

/// Strict: unknown keys anywhere raise ConfigError naming the key path.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const DatasetConfig& config);

/// Digest of the sections that determine the model architecture; stable under
/// key order. Checkpoints carry it.
std::string model_digest(const RunConfig& config);

}  // namespace cvdm
