#pragma once

#include "cvdm/dataset.hpp"
#include "cvdm/denoiser.hpp"
#include "cvdm/losses.hpp"
#include "cvdm/optimizer.hpp"
#include "cvdm/schedule.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace cvdm {

enum class AlphaPolicy { kFixed, kAuto };

struct TrainConfig {
  int iterations = 1000;
  int batch_size = 8;
  double learning_rate = 1e-4;
  double grad_clip_norm = 1.0;
  AlphaPolicy alpha_policy = AlphaPolicy::kAuto;
  /// Fixed policy: the weight itself. Auto policy: the multiplier on
  /// mean(l_inf_hat) / mean(l_gamma) over the warmup steps.
  double alpha = 1e-3;
  int alpha_warmup = 100;
  int checkpoint_every = 0;  ///< 0: only the final checkpoint
  int log_every = 1;
  LossOptions loss;
};

class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Schedule plus denoiser; the trainer and sampler borrow both.
struct Models {
  LearnedSchedule& schedule;
  Denoiser& denoiser;

  [[nodiscard]] std::vector<Parameter*> parameters() const;
};

/// Joint gradient training. Randomness per step comes from streams keyed on
/// (seed, step), and batches from a per-epoch permutation keyed on (seed,
/// epoch), so a run resumed from a checkpoint continues bit-identically.
class Trainer {
 public:
  Trainer(const TrainConfig& config, Models models, std::uint64_t seed);

  /// One update on the given batch; returns the pre-update loss values.
  LossBreakdown train_step(const Tensor& x, const Tensor& y);
  /// Batch indices for `step` (sampling without replacement within an epoch).
  [[nodiscard]] std::vector<int> batch_indices(long long step, int dataset_size) const;

  using StepCallback = std::function<void(long long step, const LossBreakdown&)>;
  /// Runs until `config.iterations` total steps. Appends one CSV row per
  /// step to `log_path` (if set) and writes checkpoints into `checkpoint_dir`.
  void run(const Dataset& data, const std::optional<std::filesystem::path>& log_path = std::nullopt,
           const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt,
           const StepCallback& on_step = {});

  void save_checkpoint(const std::filesystem::path& path, const std::string& config_digest) const;
  /// Restores parameters, optimizer moments, step and alpha state. Throws if
  /// `expected_digest` is non-empty and differs from the stored digest.
  void load_checkpoint(const std::filesystem::path& path, const std::string& expected_digest = "");

  [[nodiscard]] long long step() const { return step_; }
  [[nodiscard]] double alpha() const;
  [[nodiscard]] const TrainConfig& config() const { return config_; }
  void set_config_digest(std::string digest) { digest_ = std::move(digest); }

 private:
  TrainConfig config_;
  Models models_;
  std::uint64_t seed_;
  Adam optimizer_;
  long long step_ = 0;
  double inf_sum_ = 0.0;
  double gamma_sum_ = 0.0;
  int alpha_samples_ = 0;
  std::string digest_;
};

/// Parameters of both models, in a fixed order, keyed by name.
io::TensorArchive export_parameters(const Models& models);
void import_parameters(const Models& models, const io::TensorArchive& archive);

}  // namespace cvdm
