#include "cvdm/losses.hpp"

#include "cvdm/diffusion.hpp"

#include <algorithm>

namespace cvdm {
namespace {

using ad::Var;

/// Sum over elements, mean over the batch.
Var batch_sum(const Var& a) { return ad::sum(a) * (1.0 / a.shape().n); }

Var shifted_time(const Var& t, double shift) {
  Tensor v = t.value();
  v.data() += shift;
  return ad::constant(std::move(v));
}

Var fill_time(const Var& t, double value) { return ad::constant(Tensor::full(t.shape(), value)); }

}  // namespace

NoisePredictor as_predictor(Denoiser& denoiser) {
  return [&denoiser](const Var& z, const Var& gamma, const Var& x) { return denoiser.forward(z, gamma, x); };
}

BetaLoss loss_beta(ScheduleModel& schedule, const Var& lambda, const Var& t) {
  const ScheduleTerms terms = schedule_terms(schedule, lambda, t, 1);
  const Var beta = schedule.tau(t) * lambda;
  const Var r2 = ad::square(terms.dgamma + beta * terms.gamma);

  const Var g0 = schedule_terms(schedule, lambda, fill_time(t, 0.0), 0).gamma;
  const Var g1 = schedule_terms(schedule, lambda, fill_time(t, 1.0), 0).gamma;

  BetaLoss out;
  out.residual = batch_sum(r2);
  out.boundary = batch_sum(ad::square(g0 - 1.0)) + batch_sum(ad::square(g1));
  out.total = out.residual + out.boundary;
  out.residual_element_mean = r2.value().data().mean();
  return out;
}

Var kl_prior_from_gamma(const Var& gamma1, const Var& y) {
  const Var sigma = 1.0 - gamma1;
  if (sigma.value().data().minCoeff() < kSigmaFloor) throw SingularityError("kl_prior: sigma(1) below floor");
  return 0.5 * batch_sum(sigma + gamma1 * ad::square(y) - 1.0 - ad::log(sigma));
}

Var kl_prior(ScheduleModel& schedule, const Var& lambda, const Var& y) {
  const Var t1 = ad::constant(Tensor::full(Shape{lambda.shape().n, 1, 1, 1}, 1.0));
  return kl_prior_from_gamma(schedule_terms(schedule, lambda, t1, 0).gamma, y);
}

Var loss_diffusion_hat(const NoisePredictor& predictor, const Var& y, const Var& x, const ScheduleTerms& terms,
                       const Var& eps, const LossOptions& options) {
  const Var z = sample_forward(y, terms.gamma, eps);
  const Var err2 = ad::square(eps - predictor(z, terms.gamma, x));
  if (options.snr_weight == 0.0) return 0.5 * batch_sum(err2);
  // -SNR'/SNR = lambda * rho' / sigma.
  const Var sigma = ad::clamp(1.0 - terms.gamma, kSigmaFloor, 1.0);
  const Var weight = (1.0 - options.snr_weight) + options.snr_weight * (terms.lambda * terms.rho.d1 / sigma);
  return 0.5 * batch_sum(weight * err2);
}

Var loss_gamma_reg(ScheduleModel& schedule, const Var& lambda, const Var& t, const LossOptions& options) {
  if (options.gamma_derivative == GammaDerivative::kJet) {
    return batch_sum(ad::square(schedule_terms(schedule, lambda, t, 2).d2gamma));
  }
  const double h = options.fd_step;
  Tensor tc = t.value();
  tc.data() = tc.data().max(h).min(1.0 - h);
  const Var mid = ad::constant(tc);
  const Var gp = schedule_terms(schedule, lambda, shifted_time(mid, h), 0).gamma;
  const Var gm = schedule_terms(schedule, lambda, shifted_time(mid, -h), 0).gamma;
  const Var g0 = schedule_terms(schedule, lambda, mid, 0).gamma;
  return batch_sum(ad::square((gp - 2.0 * g0 + gm) * (1.0 / (h * h))));
}

LossResult loss_total(ScheduleModel& schedule, const NoisePredictor& predictor, const Tensor& x, const Tensor& y,
                      const std::vector<double>& t, const Tensor& eps, double alpha, const LossOptions& options) {
  if (static_cast<int>(t.size()) != x.shape().n || y.shape().n != x.shape().n) {
    throw ShapeError("loss_total: need one time per sample, got " + std::to_string(t.size()) + " for " +
                     x.shape().str());
  }
  if (eps.shape() != y.shape()) throw ShapeError("loss_total: eps " + eps.shape().str() + " vs y " + y.shape().str());
  const Var xv = ad::constant(x);
  const Var yv = ad::constant(y);
  const Var tv = time_batch(t);
  const Var lambda = schedule.lambda(xv);
  if (lambda.shape() != y.shape()) {
    throw ShapeError("loss_total: schedule map " + lambda.shape().str() + " vs y " + y.shape().str());
  }

  const BetaLoss lb = loss_beta(schedule, lambda, tv);
  const Var kl = kl_prior(schedule, lambda, yv);
  const ScheduleTerms terms = schedule_terms(schedule, lambda, tv, options.snr_weight != 0.0 ? 1 : 0);
  const Var linf = loss_diffusion_hat(predictor, yv, xv, terms, ad::constant(eps), options);
  const Var lg = loss_gamma_reg(schedule, lambda, tv, options);

  LossResult out;
  out.l_gamma = lg;
  out.total = lb.total + kl + linf;
  if (alpha != 0.0) out.total = out.total + alpha * lg;
  out.parts.l_beta = lb.total.item();
  out.parts.kl_prior = kl.item();
  out.parts.l_inf_hat = linf.item();
  out.parts.l_gamma = lg.item();
  out.parts.alpha = alpha;
  out.parts.total = out.total.item();
  out.parts.beta_residual = lb.residual_element_mean;
  return out;
}

LossResult loss_total(ScheduleModel& schedule, const NoisePredictor& predictor, const Tensor& x, const Tensor& y,
                      double alpha, Rng& rng, const LossOptions& options) {
  std::vector<double> t(static_cast<std::size_t>(x.shape().n));
  for (double& ti : t) ti = 1.0 - rng.uniform();  // (0, 1]
  const Tensor eps = rng.normal_tensor(y.shape());
  return loss_total(schedule, predictor, x, y, t, eps, alpha, options);
}

}  // namespace cvdm
