#pragma once

// Learnable variance schedule
//   gamma(t, x) = exp(-lambda(x) * rho(t)),   beta(t, x) = tau(t) * lambda(x),
// with rho increasing and rho(0) = 0, tau >= 0, lambda > 0 per element.
// gamma and beta are tied by d(gamma)/dt = -beta * gamma, which training
// enforces through a residual penalty rather than by construction.

#include "cvdm/autodiff.hpp"
#include "cvdm/jet.hpp"
#include "cvdm/nn.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

namespace cvdm {

inline constexpr double kMonotoneFloor = 1e-4;  ///< rho gets + kMonotoneFloor * t
inline constexpr double kBetaClip = 1e-5;       ///< discrete betas stay <= 1 - kBetaClip
inline constexpr double kSigmaFloor = 1e-8;     ///< minimum sigma in any denominator
inline constexpr double kGammaFloor = 1e-8;     ///< minimum gamma under a square root division

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ScheduleMode { kPixelwise, kGlobal };

/// rho(t) and its first two time derivatives, each {B,1,1,1}.
struct TimeJet {
  ad::Var value;
  ad::Var d1;
  ad::Var d2;
};

/// Interface shared by the learned schedule and closed-form fixtures.
class ScheduleModel {
 public:
  virtual ~ScheduleModel() = default;

  /// `order` = highest derivative needed (0, 1 or 2). t is {B,1,1,1}.
  virtual TimeJet rho(const ad::Var& t, int order) = 0;
  virtual ad::Var tau(const ad::Var& t) = 0;
  /// Per-element positive map {B,Cy,H,W} before any global-mode reduction.
  virtual ad::Var lambda_map(const ad::Var& x) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }

  [[nodiscard]] ScheduleMode mode() const { return mode_; }
  void set_mode(ScheduleMode mode) { mode_ = mode; }

  /// lambda after the mode reduction; global mode uses one value per sample.
  ad::Var lambda(const ad::Var& x);

 private:
  ScheduleMode mode_ = ScheduleMode::kPixelwise;
};

struct LearnedScheduleConfig {
  int x_channels = 2;
  int y_channels = 1;
  int time_hidden = 64;
  int lambda_filters = 4;
  int lambda_scales = 3;
  bool instance_norm = true;
  double lambda_init = 1.0;
  ScheduleMode mode = ScheduleMode::kPixelwise;
  /// Adam steps fitting tau to rho' on a time grid at construction; 0 skips.
  int tau_fit_steps = 2000;
};

/// rho = eps*t + t*softplus(f_rho(t)), tau = t*softplus(f_tau(t)), lambda = U-Net(x) with softplus head.
class LearnedSchedule : public ScheduleModel {
 public:
  LearnedSchedule(const LearnedScheduleConfig& config, Rng& rng);

  TimeJet rho(const ad::Var& t, int order) override;
  ad::Var tau(const ad::Var& t) override;
  ad::Var lambda_map(const ad::Var& x) override;
  std::vector<Parameter*> parameters() override;

  [[nodiscard]] const LearnedScheduleConfig& config() const { return config_; }
  nn::UNet& lambda_net() { return lambda_net_; }
  /// Fits the tau net alone to the current rho' (rho and lambda untouched);
  /// returns the final RMS mismatch over the grid.
  double fit_tau(int iterations, double learning_rate = 0.05);

 private:
  LearnedScheduleConfig config_;
  nn::PositiveResidualNet rho_net_;
  nn::PositiveResidualNet tau_net_;
  nn::UNet lambda_net_;
};

/// Closed-form schedule for fixtures: rho given as a Jet-valued function so
/// its derivatives are exact, tau as a plain function, lambda a fixed map.
class AnalyticSchedule : public ScheduleModel {
 public:
  using RhoFn = std::function<Jet2<double>(Jet2<double>)>;
  using TauFn = std::function<double(double)>;

  /// `lambda` is {1,Cy,H,W}; lambda_map repeats it over the batch of x.
  AnalyticSchedule(RhoFn rho, TauFn tau, Tensor lambda);

  /// rho(t) = c*t, tau(t) = c: satisfies rho' = tau.
  static AnalyticSchedule linear(double c, Tensor lambda = Tensor::scalar(1.0));

  TimeJet rho(const ad::Var& t, int order) override;
  ad::Var tau(const ad::Var& t) override;
  ad::Var lambda_map(const ad::Var& x) override;

  [[nodiscard]] Jet2<double> rho_jet(double t) const { return rho_(Jet2<double>::variable(t)); }
  [[nodiscard]] double tau_value(double t) const { return tau_(t); }
  [[nodiscard]] const Tensor& lambda_values() const { return lambda_; }

 private:
  RhoFn rho_;
  TauFn tau_;
  Tensor lambda_;
};

// ---------------------------------------------------------------------------
// Graph-level schedule quantities (used by the losses).

/// Schedule terms at per-sample times for one batch of conditions.
struct ScheduleTerms {
  ad::Var lambda;   ///< {B,Cy,H,W}
  TimeJet rho;      ///< {B,1,1,1}
  ad::Var gamma;    ///< {B,Cy,H,W}
  ad::Var dgamma;   ///< d(gamma)/dt, when order >= 1
  ad::Var d2gamma;  ///< d2(gamma)/dt2, when order >= 2
};

/// `lambda` may be precomputed (reused across several t evaluations).
ScheduleTerms schedule_terms(ScheduleModel& schedule, const ad::Var& lambda, const ad::Var& t, int order);

/// {B,1,1,1} constant time tensor.
ad::Var time_batch(const std::vector<double>& t);

// ---------------------------------------------------------------------------
// Tensor-level operations. x is {B,Cx,H,W}; results are y-shaped {B,Cy,H,W}.

Tensor gamma(ScheduleModel& schedule, double t, const Tensor& x);
Tensor beta(ScheduleModel& schedule, double t, const Tensor& x);
Tensor sigma(ScheduleModel& schedule, double t, const Tensor& x);
/// gamma / (1 - gamma); throws SingularityError when any sigma < kSigmaFloor.
Tensor snr(ScheduleModel& schedule, double t, const Tensor& x);

enum class DiscreteBeta {
  kRatio,   ///< 1 - gamma(t_i)/gamma(t_{i-1}): exact telescoping
  kOverT,   ///< beta(t_i)/T: continuum approximation
};

struct DiscreteSchedule {
  int steps = 0;
  DiscreteBeta kind = DiscreteBeta::kRatio;
  std::vector<Tensor> beta_hat;   ///< index i = 1..T (entry 0 is zeros)
  std::vector<Tensor> gamma_hat;  ///< index i = 0..T, running product of (1 - beta_hat)
};

/// Tables at t_i = i/T; beta_hat clamped into [0, 1 - kBetaClip].
DiscreteSchedule discretize(ScheduleModel& schedule, int steps, const Tensor& x, DiscreteBeta kind);

}  // namespace cvdm
