#include "cvdm/diffusion.hpp"

#include <string>

namespace cvdm {
namespace {

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

Tensor sample_forward(const Tensor& y, const Tensor& gamma, const Tensor& eps) {
  require_same(y.shape(), eps.shape(), "sample_forward");
  require_same(y.shape(), gamma.shape(), "sample_forward");
  Tensor z(y.shape());
  z.data() = gamma.data().sqrt() * y.data() + (1.0 - gamma.data()).max(0.0).sqrt() * eps.data();
  return z;
}

Tensor sample_forward(ScheduleModel& schedule, const Tensor& y, const Tensor& x, double t, const Tensor& eps) {
  return sample_forward(y, gamma(schedule, t, x), eps);
}

ad::Var sample_forward(const ad::Var& y, const ad::Var& gamma, const ad::Var& eps) {
  require_same(y.shape(), eps.shape(), "sample_forward");
  return ad::sqrt(gamma) * y + ad::sqrt(ad::clamp(1.0 - gamma, 0.0, 1.0)) * eps;
}

TransitionParams transition_from_gammas(const Tensor& gamma_prev, const Tensor& gamma_cur) {
  require_same(gamma_prev.shape(), gamma_cur.shape(), "transition");
  TransitionParams p{Tensor(gamma_cur.shape()), Tensor(gamma_cur.shape())};
  p.var.data() = (1.0 - gamma_cur.data() / gamma_prev.data()).max(0.0).min(1.0 - kBetaClip);
  p.mean_coeff.data() = (1.0 - p.var.data()).sqrt();
  return p;
}

TransitionParams transition_params(ScheduleModel& schedule, int i, int steps, const Tensor& x) {
  if (i < 1 || i > steps) throw std::invalid_argument("transition step must satisfy 1 <= i <= T");
  return transition_from_gammas(gamma(schedule, static_cast<double>(i - 1) / steps, x),
                                gamma(schedule, static_cast<double>(i) / steps, x));
}

PosteriorParams posterior_from_gammas(const Tensor& gamma_prev, const Tensor& gamma_cur, const Tensor& z,
                                      const Tensor& y) {
  require_same(z.shape(), y.shape(), "posterior");
  require_same(z.shape(), gamma_cur.shape(), "posterior");
  const Eigen::ArrayXd sigma_cur = 1.0 - gamma_cur.data();
  if (sigma_cur.minCoeff() < kSigmaFloor) throw SingularityError("posterior: sigma(t_i) below floor");
  const TransitionParams tr = transition_from_gammas(gamma_prev, gamma_cur);
  const Eigen::ArrayXd& b = tr.var.data();
  const Eigen::ArrayXd sigma_prev = 1.0 - gamma_prev.data();

  PosteriorParams p{Tensor(z.shape()), Tensor(z.shape())};
  p.mu.data() = tr.mean_coeff.data() * sigma_prev / sigma_cur * z.data() +
                gamma_prev.data().sqrt() * b / sigma_cur * y.data();
  p.var.data() = (b * sigma_prev / sigma_cur).max(0.0);
  return p;
}

PosteriorParams posterior_params(ScheduleModel& schedule, const Tensor& z, int i, int steps, const Tensor& y,
                                 const Tensor& x) {
  if (i < 1 || i > steps) throw std::invalid_argument("posterior step must satisfy 1 <= i <= T");
  return posterior_from_gammas(gamma(schedule, static_cast<double>(i - 1) / steps, x),
                               gamma(schedule, static_cast<double>(i) / steps, x), z, y);
}

Tensor predict_y_from_eps(const Tensor& z, const Tensor& gamma, const Tensor& eps_hat) {
  require_same(z.shape(), eps_hat.shape(), "predict_y_from_eps");
  require_same(z.shape(), gamma.shape(), "predict_y_from_eps");
  if (gamma.data().minCoeff() < kGammaFloor) throw SingularityError("predict_y_from_eps: gamma below floor");
  Tensor y(z.shape());
  y.data() = (z.data() - (1.0 - gamma.data()).max(0.0).sqrt() * eps_hat.data()) / gamma.data().sqrt();
  return y;
}

Tensor predict_y_from_eps(ScheduleModel& schedule, const Tensor& z, double t, const Tensor& x, const Tensor& eps_hat) {
  return predict_y_from_eps(z, gamma(schedule, t, x), eps_hat);
}

}  // namespace cvdm
