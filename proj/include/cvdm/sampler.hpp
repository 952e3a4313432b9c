#pragma once

#include "cvdm/denoiser.hpp"
#include "cvdm/schedule.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvdm {

enum class BetaMode {
  kLearned,  ///< beta(t_i, x)/T, gamma as the running product of alpha
  kRatio,    ///< beta from schedule gamma ratios, gamma taken from the schedule
  kLinear,   ///< fixed linear beta from linear_start to linear_end
};

struct SamplerConfig {
  int steps = 100;
  BetaMode beta_mode = BetaMode::kLearned;
  double linear_start = 1e-4;
  double linear_end = 0.03;
  std::uint64_t seed = 0;
  int n_samples = 4;

  void validate() const;
};

/// "learned", "ratio" or "linear:a:b".
void parse_beta_mode(const std::string& text, SamplerConfig& config);
std::string beta_mode_string(const SamplerConfig& config);

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-step tables, index i = 1..T (entry 0 unused), each y-shaped for the batch of x.
struct SamplerTables {
  int steps = 0;
  std::vector<Tensor> beta;
  std::vector<Tensor> gamma;
};

/// beta is clamped into [kBetaClip, 1 - kBetaClip] in every mode.
SamplerTables sampler_tables(ScheduleModel& schedule, const Tensor& x, const SamplerConfig& config);

/// eps_hat(z_t, gamma_t, x) on plain tensors.
using TensorPredictor = std::function<Tensor(const Tensor& z, const Tensor& gamma, const Tensor& x)>;
TensorPredictor as_tensor_predictor(Denoiser& denoiser);

/// z_{t-1} = (z_t - beta/sqrt(1-gamma) eps_hat)/sqrt(1-beta) + sqrt(beta) noise.
/// `noise` may be null for the final step.
Tensor ancestral_step(const Tensor& z, const Tensor& beta, const Tensor& gamma, const Tensor& eps_hat,
                      const Tensor* noise);

/// One draw per element of the batch of x; batch element b uses the chain
/// stream (seed, "chain", first_chain + b).
Tensor sample(const Tensor& x, const TensorPredictor& predictor, ScheduleModel& schedule,
              const SamplerConfig& config, std::uint64_t first_chain = 0);
/// Same, with precomputed tables (already matching the batch of x).
Tensor sample(const Tensor& x, const TensorPredictor& predictor, const SamplerTables& tables,
              std::uint64_t seed, std::uint64_t first_chain = 0);

struct SampleBatch {
  std::vector<Tensor> samples;  ///< each {1,Cy,H,W}
  Tensor mean;
  Tensor variance;  ///< unbiased, per element
};

/// config.n_samples >= 2 chains for a single condition x {1,Cx,H,W}.
SampleBatch sample_batch(const Tensor& x, const TensorPredictor& predictor, ScheduleModel& schedule,
                         const SamplerConfig& config);

/// Per-element mean and unbiased variance of a set of equally shaped tensors.
std::pair<Tensor, Tensor> mean_and_variance(const std::vector<Tensor>& samples);

}  // namespace cvdm
