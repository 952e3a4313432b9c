#include "cvdm/schedule.hpp"

#include "cvdm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cvdm {
namespace {

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("schedule time must lie in [0,1], got " + std::to_string(t));
}

Tensor constant_like_times(const Tensor& t, const std::function<double(double)>& f) {
  Tensor out(t.shape());
  for (Eigen::Index i = 0; i < t.data().size(); ++i) out.data()[i] = f(t.data()[i]);
  return out;
}

}  // namespace

ad::Var ScheduleModel::lambda(const ad::Var& x) {
  ad::Var map = lambda_map(x);
  if (mode_ == ScheduleMode::kGlobal) map = ad::broadcast_to(ad::spatial_mean(map), map.shape());
  return map;
}

// ---------------------------------------------------------------------------

LearnedSchedule::LearnedSchedule(const LearnedScheduleConfig& config, Rng& rng)
    : config_(config),
      rho_net_("rho", config.time_hidden, nn::PositiveResidualNet::Init{10.0, -5.0}, rng),
      tau_net_("tau", config.time_hidden, nn::PositiveResidualNet::Init{8.0, 1.0}, rng),
      lambda_net_(
          nn::UNetConfig{
              .in_channels = config.x_channels,
              .out_channels = config.y_channels,
              .base_filters = config.lambda_filters,
              .scales = config.lambda_scales,
              .instance_norm = config.instance_norm,
              .padding = ad::Padding::kZero,
              .output = nn::OutputActivation::kSoftplus,
              .zero_init_output = true,
              .output_bias = config.lambda_init > 30.0 ? config.lambda_init : std::log(std::expm1(config.lambda_init)),
          },
          rng) {
  set_mode(config.mode);
  if (config.tau_fit_steps > 0) fit_tau(config.tau_fit_steps);
}

double LearnedSchedule::fit_tau(int iterations, double learning_rate) {
  constexpr int kNodes = 64;
  std::vector<double> grid(kNodes);
  for (int i = 0; i < kNodes; ++i) grid[static_cast<std::size_t>(i)] = (i + 0.5) / kNodes;
  const ad::Var t = time_batch(grid);
  ad::Var target;
  {
    ad::NoGradGuard guard;
    target = ad::constant(rho(t, 1).d1.value());
  }
  std::vector<Parameter*> params;
  tau_net_.collect_parameters(params);
  Adam opt(params, AdamConfig{.learning_rate = learning_rate, .clip_norm = 0.0});
  double rms = 0;
  for (int it = 0; it <= iterations; ++it) {
    opt.zero_grad();
    const ad::Var loss = ad::mean(ad::square(tau(t) - target));
    rms = std::sqrt(loss.item());
    if (it == iterations) break;
    ad::backward(loss);
    opt.step();
  }
  return rms;
}

TimeJet LearnedSchedule::rho(const ad::Var& t, int order) {
  using namespace ad;
  const auto f = rho_net_.evaluate(t, order);
  const Var g = softplus(f.value);
  TimeJet out;
  out.value = kMonotoneFloor * t + t * g;
  if (order < 1) return out;
  const Var s = sigmoid(f.value);
  const Var g1 = s * f.d1;
  out.d1 = kMonotoneFloor + g + t * g1;
  if (order < 2) return out;
  const Var g2 = s * (1.0 - s) * square(f.d1) + s * f.d2;
  out.d2 = 2.0 * g1 + t * g2;
  return out;
}

ad::Var LearnedSchedule::tau(const ad::Var& t) { return t * ad::softplus(tau_net_.evaluate(t, 0).value); }

ad::Var LearnedSchedule::lambda_map(const ad::Var& x) { return lambda_net_.forward(x); }

std::vector<Parameter*> LearnedSchedule::parameters() {
  std::vector<Parameter*> out;
  rho_net_.collect_parameters(out);
  tau_net_.collect_parameters(out);
  lambda_net_.collect_parameters(out);
  return out;
}

// ---------------------------------------------------------------------------

AnalyticSchedule::AnalyticSchedule(RhoFn rho, TauFn tau, Tensor lambda)
    : rho_(std::move(rho)), tau_(std::move(tau)), lambda_(std::move(lambda)) {
  if (lambda_.shape().n != 1) throw ShapeError("analytic lambda must have batch 1, got " + lambda_.shape().str());
  if ((lambda_.data() <= 0.0).any()) throw std::invalid_argument("analytic lambda must be positive");
}

AnalyticSchedule AnalyticSchedule::linear(double c, Tensor lambda) {
  return AnalyticSchedule([c](Jet2<double> t) { return c * t; }, [c](double) { return c; }, std::move(lambda));
}

TimeJet AnalyticSchedule::rho(const ad::Var& t, int order) {
  const Tensor& tv = t.value();
  TimeJet out;
  out.value = ad::constant(constant_like_times(tv, [&](double s) { return rho_jet(s).v; }));
  if (order >= 1) out.d1 = ad::constant(constant_like_times(tv, [&](double s) { return rho_jet(s).d1; }));
  if (order >= 2) out.d2 = ad::constant(constant_like_times(tv, [&](double s) { return rho_jet(s).d2; }));
  return out;
}

ad::Var AnalyticSchedule::tau(const ad::Var& t) {
  return ad::constant(constant_like_times(t.value(), [&](double s) { return tau_(s); }));
}

ad::Var AnalyticSchedule::lambda_map(const ad::Var& x) {
  const Shape& xs = x.shape();
  const Shape target{xs.n, lambda_.shape().c, xs.h, xs.w};
  return ad::broadcast_to(ad::constant(lambda_), target);
}

// ---------------------------------------------------------------------------

ScheduleTerms schedule_terms(ScheduleModel& schedule, const ad::Var& lambda, const ad::Var& t, int order) {
  using namespace ad;
  ScheduleTerms out;
  out.lambda = lambda;
  out.rho = schedule.rho(t, order);
  out.gamma = exp(-(lambda * out.rho.value));
  if (order >= 1) {
    const Var rate = lambda * out.rho.d1;
    out.dgamma = -(rate * out.gamma);
    if (order >= 2) out.d2gamma = (square(rate) - lambda * out.rho.d2) * out.gamma;
  }
  return out;
}

ad::Var time_batch(const std::vector<double>& t) {
  Tensor v(Shape{static_cast<int>(t.size()), 1, 1, 1});
  for (std::size_t i = 0; i < t.size(); ++i) v.data()[static_cast<Eigen::Index>(i)] = t[i];
  return ad::constant(std::move(v));
}

namespace {

ad::Var same_time(double t, int batch) { return time_batch(std::vector<double>(static_cast<std::size_t>(batch), t)); }

}  // namespace

Tensor gamma(ScheduleModel& schedule, double t, const Tensor& x) {
  check_time(t);
  ad::NoGradGuard guard;
  const ad::Var lambda = schedule.lambda(ad::constant(x));
  return schedule_terms(schedule, lambda, same_time(t, x.shape().n), 0).gamma.value();
}

Tensor beta(ScheduleModel& schedule, double t, const Tensor& x) {
  check_time(t);
  ad::NoGradGuard guard;
  const ad::Var lambda = schedule.lambda(ad::constant(x));
  return (schedule.tau(same_time(t, x.shape().n)) * lambda).value();
}

Tensor sigma(ScheduleModel& schedule, double t, const Tensor& x) {
  Tensor g = gamma(schedule, t, x);
  g.data() = 1.0 - g.data();
  return g;
}

Tensor snr(ScheduleModel& schedule, double t, const Tensor& x) {
  Tensor g = gamma(schedule, t, x);
  const Eigen::ArrayXd s = 1.0 - g.data();
  if (s.minCoeff() < kSigmaFloor) {
    throw SingularityError("SNR undefined: sigma(" + std::to_string(t) + ") has elements below " +
                           std::to_string(kSigmaFloor));
  }
  g.data() /= s;
  return g;
}

DiscreteSchedule discretize(ScheduleModel& schedule, int steps, const Tensor& x, DiscreteBeta kind) {
  if (steps < 1) throw std::invalid_argument("discretize needs T >= 1");
  ad::NoGradGuard guard;
  const int batch = x.shape().n;
  const ad::Var lambda = schedule.lambda(ad::constant(x));
  const Shape ys = lambda.shape();

  DiscreteSchedule out;
  out.steps = steps;
  out.kind = kind;
  out.beta_hat.assign(static_cast<std::size_t>(steps) + 1, Tensor::zeros(ys));
  out.gamma_hat.assign(static_cast<std::size_t>(steps) + 1, Tensor::full(ys, 1.0));

  Tensor gamma_prev = Tensor::full(ys, 1.0);
  for (int i = 1; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const ad::Var tv = same_time(t, batch);
    Tensor& b = out.beta_hat[static_cast<std::size_t>(i)];
    if (kind == DiscreteBeta::kRatio) {
      const Tensor gamma_i = schedule_terms(schedule, lambda, tv, 0).gamma.value();
      b.data() = 1.0 - gamma_i.data() / gamma_prev.data().max(1e-300);
      gamma_prev = gamma_i;
    } else {
      b.data() = (schedule.tau(tv) * lambda).value().data() / steps;
    }
    b.data() = b.data().max(0.0).min(1.0 - kBetaClip);
    out.gamma_hat[static_cast<std::size_t>(i)].data() =
        out.gamma_hat[static_cast<std::size_t>(i) - 1].data() * (1.0 - b.data());
  }
  return out;
}

}  // namespace cvdm
