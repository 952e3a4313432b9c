#pragma once

// Training objective
//   L = L_beta + KL(q(z_1|y,x) || N(0,I)) + L_inf_hat + alpha * L_gamma.
// Element sums, batch means. Times are one per batch element, {B,1,1,1}.

#include "cvdm/autodiff.hpp"
#include "cvdm/denoiser.hpp"
#include "cvdm/rng.hpp"
#include "cvdm/schedule.hpp"

#include <functional>
#include <vector>

namespace cvdm {

/// eps_hat(z, gamma, x) as a graph function.
using NoisePredictor = std::function<ad::Var(const ad::Var& z, const ad::Var& gamma, const ad::Var& x)>;
NoisePredictor as_predictor(Denoiser& denoiser);

enum class GammaDerivative { kJet, kFiniteDifference };

struct LossOptions {
  GammaDerivative gamma_derivative = GammaDerivative::kJet;
  double fd_step = 1e-3;
  /// Blend toward the SNR'/SNR-weighted diffusion term; 0 disables it.
  double snr_weight = 0.0;
};

struct LossBreakdown {
  double l_beta = 0.0;
  double kl_prior = 0.0;
  double l_inf_hat = 0.0;
  double l_gamma = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  /// Per-element mean of (d(gamma)/dt + beta*gamma)^2 at the sampled times.
  double beta_residual = 0.0;
};

struct BetaLoss {
  ad::Var residual;  ///< batch mean of ||d(gamma)/dt + beta*gamma||^2
  ad::Var boundary;  ///< batch mean of ||gamma(0) - 1||^2 + ||gamma(1)||^2
  ad::Var total;
  double residual_element_mean = 0.0;
};

BetaLoss loss_beta(ScheduleModel& schedule, const ad::Var& lambda, const ad::Var& t);
/// Closed-form KL of N(sqrt(gamma_1) y, 1 - gamma_1) from N(0, 1).
ad::Var kl_prior(ScheduleModel& schedule, const ad::Var& lambda, const ad::Var& y);
ad::Var kl_prior_from_gamma(const ad::Var& gamma1, const ad::Var& y);
/// 1/2 ||eps - eps_hat(z_t, gamma, x)||^2, batch mean. `terms` must be at order >= 1 when snr_weight > 0.
ad::Var loss_diffusion_hat(const NoisePredictor& predictor, const ad::Var& y, const ad::Var& x, const ScheduleTerms& terms,
                           const ad::Var& eps, const LossOptions& options = {});
ad::Var loss_gamma_reg(ScheduleModel& schedule, const ad::Var& lambda, const ad::Var& t,
                       const LossOptions& options = {});

struct LossResult {
  ad::Var total;
  ad::Var l_gamma;  ///< unweighted, so callers can re-weight after seeing its value
  LossBreakdown parts;
};

/// All four terms at given times and noise. x {B,Cx,H,W}, y and eps {B,Cy,H,W}.
LossResult loss_total(ScheduleModel& schedule, const NoisePredictor& predictor, const Tensor& x, const Tensor& y,
                      const std::vector<double>& t, const Tensor& eps, double alpha, const LossOptions& options = {});
/// Draws one t ~ U(0,1] per sample and eps ~ N(0,I) from `rng`.
LossResult loss_total(ScheduleModel& schedule, const NoisePredictor& predictor, const Tensor& x, const Tensor& y,
                      double alpha, Rng& rng, const LossOptions& options = {});

}  // namespace cvdm
