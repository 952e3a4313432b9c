#pragma once

// Glue shared by the command-line tool and the acceptance suite: building
// models from a run config, checkpoint checks, split-level sampling and
// evaluation, and the schedule profile report.

#include "cvdm/config.hpp"

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvdm {

class DigestMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelSet {
  std::unique_ptr<LearnedSchedule> schedule;
  std::unique_ptr<Denoiser> denoiser;

  [[nodiscard]] Models models() const { return {*schedule, *denoiser}; }
};

/// Fresh models; both draw their initial weights from the stream (seed, "init").
ModelSet build_models(const RunConfig& config);

std::string checkpoint_digest(const std::filesystem::path& checkpoint);
/// Parameters only (no optimizer state). Throws DigestMismatch when the stored
/// digest differs from `expected_digest`.
void load_parameters(const ModelSet& models, const std::filesystem::path& checkpoint,
                     const std::string& expected_digest);

std::string sample_id(const Dataset& data, int index);

/// n_samples chains per condition; condition i uses the sampler seed
/// derive_seed(config.seed, "condition", i). `limit` < 0 samples the whole split.
std::vector<SampleBatch> sample_split(const Dataset& data, const ModelSet& models, const SamplerConfig& config,
                                      int limit = -1);

/// Metrics of predictions[i] against data.samples[i].y.
metrics::MetricReport evaluate_split(const Dataset& data, const std::vector<Tensor>& predictions,
                                     const metrics::MetricsConfig& config);

/// Mean gamma(t) and beta(t) over the whole image and over two region masks:
/// "structure" (target above its own mean) and "background" (the rest).
struct ScheduleProfile {
  std::vector<double> t;
  std::vector<double> gamma_all, beta_all;
  std::vector<double> gamma_structure, beta_structure;
  std::vector<double> gamma_background, beta_background;
  int structure_pixels = 0;
  Tensor lambda;         ///< {1,Cy,H,W}
  Tensor beta_integral;  ///< int_0^1 beta(t, x) dt per element
};

ScheduleProfile schedule_profile(ScheduleModel& schedule, const Tensor& x, const Tensor& y, int points = 101);
/// <dir>/schedule.csv, schedule_{beta,gamma}.svg, lambda.png and beta_integral.{npy,png}.
void write_schedule_profile(const std::filesystem::path& dir, const ScheduleProfile& profile);

}  // namespace cvdm
