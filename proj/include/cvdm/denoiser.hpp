#pragma once

#include "cvdm/nn.hpp"
#include "cvdm/schedule.hpp"

namespace cvdm {

struct DenoiserConfig {
  int x_channels = 2;
  int y_channels = 1;
  int base_filters = 8;
  int scales = 3;
  bool instance_norm = true;
  ad::Padding padding = ad::Padding::kZero;
};

/// Noise predictor eps_hat(z_t, gamma(t,x), x). Time is never an input on its
/// own; the network sees it only through the gamma map.
class Denoiser : public nn::Module {
 public:
  Denoiser(const DenoiserConfig& config, Rng& rng);

  /// Inputs are {B,Cy,H,W}, {B,Cy,H,W}, {B,Cx,H,W}; output is y-shaped.
  ad::Var forward(const ad::Var& z, const ad::Var& gamma, const ad::Var& x);
  void collect_parameters(std::vector<Parameter*>& out) override { net_.collect_parameters(out); }

  [[nodiscard]] const DenoiserConfig& config() const { return config_; }
  void set_padding(ad::Padding padding) { net_.set_padding(padding); }

 private:
  DenoiserConfig config_;
  nn::UNet net_;
};

/// Inference-only evaluation at a single time t.
Tensor predict_noise(Denoiser& denoiser, ScheduleModel& schedule, const Tensor& z, double t, const Tensor& x);
Tensor predict_noise(Denoiser& denoiser, const Tensor& z, const Tensor& gamma, const Tensor& x);

}  // namespace cvdm
