#pragma once

#include "cvdm/autodiff.hpp"

#include <vector>

namespace cvdm {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 1.0;
};

/// Adam over a fixed parameter list, with global-norm gradient clipping.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  /// Applies one update from the accumulated gradients and returns the
  /// pre-clip global gradient norm. Gradients are left untouched.
  double step();
  void zero_grad();

  [[nodiscard]] const std::vector<Parameter*>& parameters() const { return params_; }
  [[nodiscard]] long long steps() const { return steps_; }
  [[nodiscard]] const AdamConfig& config() const { return config_; }

  // Moment buffers exposed for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  [[nodiscard]] const std::vector<Tensor>& first_moments() const { return m_; }
  [[nodiscard]] const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(long long steps) { steps_ = steps; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long long steps_ = 0;
};

}  // namespace cvdm
