#include "cvdm/denoiser.hpp"

namespace cvdm {

Denoiser::Denoiser(const DenoiserConfig& config, Rng& rng)
    : config_(config),
      net_(nn::UNetConfig{.in_channels = config.x_channels + 2 * config.y_channels,
                          .out_channels = config.y_channels,
                          .base_filters = config.base_filters,
                          .scales = config.scales,
                          .instance_norm = config.instance_norm,
                          .padding = config.padding,
                          .output = nn::OutputActivation::kLinear,
                          .zero_init_output = true,
                          .output_bias = 0.0},
           rng) {}

ad::Var Denoiser::forward(const ad::Var& z, const ad::Var& gamma, const ad::Var& x) {
  const Shape& zs = z.shape();
  if (zs.c != config_.y_channels || gamma.shape() != zs) {
    throw ShapeError("denoiser: z " + zs.str() + " and gamma " + gamma.shape().str() + " must be y-shaped");
  }
  if (x.shape().n != zs.n || x.shape().h != zs.h || x.shape().w != zs.w || x.shape().c != config_.x_channels) {
    throw ShapeError("denoiser: condition " + x.shape().str() + " not aligned with " + zs.str());
  }
  return net_.forward(ad::concat_channels({x, gamma, z}));
}

Tensor predict_noise(Denoiser& denoiser, const Tensor& z, const Tensor& gamma, const Tensor& x) {
  if (!z.all_finite() || !x.all_finite()) throw std::domain_error("predict_noise: non-finite input");
  ad::NoGradGuard guard;
  return denoiser.forward(ad::constant(z), ad::constant(gamma), ad::constant(x)).value();
}

Tensor predict_noise(Denoiser& denoiser, ScheduleModel& schedule, const Tensor& z, double t, const Tensor& x) {
  return predict_noise(denoiser, z, gamma(schedule, t, x), x);
}

}  // namespace cvdm
