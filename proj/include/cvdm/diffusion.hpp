#pragma once

// Forward corruption q(z_t | y, x), one-step transitions, the Gaussian
// posterior q(z_{t_{i-1}} | z_{t_i}, y, x) and the noise-to-target inversion.
// Functions taking gamma tensors are the primitives; the schedule overloads
// evaluate gamma first.

#include "cvdm/autodiff.hpp"
#include "cvdm/schedule.hpp"

namespace cvdm {

/// z = sqrt(gamma) * y + sqrt(1 - gamma) * eps.
Tensor sample_forward(const Tensor& y, const Tensor& gamma, const Tensor& eps);
Tensor sample_forward(ScheduleModel& schedule, const Tensor& y, const Tensor& x, double t, const Tensor& eps);
ad::Var sample_forward(const ad::Var& y, const ad::Var& gamma, const ad::Var& eps);

struct TransitionParams {
  Tensor mean_coeff;  ///< sqrt(1 - beta_hat)
  Tensor var;         ///< beta_hat
};

/// Step i (1..T) of the discretized chain, ratio-mode beta_hat.
TransitionParams transition_params(ScheduleModel& schedule, int i, int steps, const Tensor& x);
TransitionParams transition_from_gammas(const Tensor& gamma_prev, const Tensor& gamma_cur);

struct PosteriorParams {
  Tensor mu;
  Tensor var;  ///< sigma_B, a variance
};

PosteriorParams posterior_params(ScheduleModel& schedule, const Tensor& z, int i, int steps, const Tensor& y,
                                 const Tensor& x);
/// Throws SingularityError if 1 - gamma_cur < kSigmaFloor anywhere.
PosteriorParams posterior_from_gammas(const Tensor& gamma_prev, const Tensor& gamma_cur, const Tensor& z,
                                      const Tensor& y);

/// y_hat = (z - sqrt(1 - gamma) * eps_hat) / sqrt(gamma); throws SingularityError if gamma < kGammaFloor.
Tensor predict_y_from_eps(const Tensor& z, const Tensor& gamma, const Tensor& eps_hat);
Tensor predict_y_from_eps(ScheduleModel& schedule, const Tensor& z, double t, const Tensor& x, const Tensor& eps_hat);

}  // namespace cvdm
