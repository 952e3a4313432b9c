#pragma once

#include "cvdm/jet.hpp"

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvdm::convergence {

using JetFn = std::function<Jet2<double>(Jet2<double>)>;

/// Scalar schedule given by SNR(t) as a jet, so SNR' and SNR'' are exact.
struct LabSchedule {
  std::string name;
  JetFn snr;

  /// log SNR falling linearly from `hi` at t=0 to `lo` at t=1.
  static LabSchedule log_linear(double hi = 3.0, double lo = -3.0);
  /// log SNR = hi - (hi - lo) * sigmoid(k (t - 0.5)), rescaled to hit hi and lo at the ends.
  static LabSchedule steep_sigmoid(double k = 20.0, double hi = 3.0, double lo = -3.0);
  /// gamma = exp(-rho(t)) with lambda = 1.
  static LabSchedule from_rho(std::string name, JetFn rho);
};

/// y_hat = y + delta * g(t) on every one of `elements` entries, so that
/// ||y - y_hat||^2 = elements * delta^2 * g(t)^2 independent of the noise draw.
struct Surrogate {
  double delta = 0.1;
  std::function<double(double)> g = [](double t) { return t; };
  int elements = 1;

  [[nodiscard]] double squared_error(double t) const;
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights);

/// Composite Gauss-Legendre over [a, b] with `panels` panels of `order` nodes.
double integrate(const std::function<double(double)>& f, double a, double b, int panels, int order = 16);

/// Grid t_i = t_start + (i-1)(1 - t_start)/(T-1), i = 1..T.
std::vector<double> time_grid(int steps, double t_start);

/// 1/2 sum_{i=2..T} (SNR(t_{i-1}) - SNR(t_i)) * e(t_i).
double discrete_loss(int steps, const LabSchedule& schedule, const Surrogate& surrogate, double t_start);

/// -1/2 int_{t_start}^1 SNR'(t) e(t) dt with at least `nodes` quadrature nodes;
/// throws QuadratureError when doubling the node count moves the value by more than tol * max(1, |value|).
double continuous_loss(const LabSchedule& schedule, const Surrogate& surrogate, double t_start, int nodes = 1024,
                       double tol = 1e-8);

/// sqrt(int_{t_start}^1 SNR''(t)^2 dt).
double snr2_norm(const LabSchedule& schedule, double t_start, int nodes = 1024);

struct ConvergenceReport {
  std::string schedule;
  double t_start = 0;  ///< after any shift away from an SNR overflow
  bool shifted = false;
  std::vector<int> steps;
  std::vector<double> discrete;
  std::vector<double> gap;  ///< |L_T - L_inf|
  double continuous = 0;
  double slope = 0;  ///< least-squares slope of log gap against log T
  double intercept = 0;
  double snr2_l2 = 0;
};

/// Smallest t_start >= requested at which SNR is finite (doubling until it is).
double usable_start(const LabSchedule& schedule, double t_start);

ConvergenceReport convergence_report(const LabSchedule& schedule, const Surrogate& surrogate,
                                     const std::vector<int>& steps, double t_start);

struct Study {
  std::vector<ConvergenceReport> reports;
  /// The schedule with the larger ||SNR''|| has the larger gap at every T.
  bool dominance = false;
};

/// Every schedule shares t_start = 1/max(steps) (shifted together if needed).
Study convergence_study(const std::vector<LabSchedule>& schedules, const Surrogate& surrogate,
                        const std::vector<int>& steps);

/// <dir>/convergence.csv, <dir>/convergence.json and <dir>/convergence.svg (log-log gap plot).
void write_study(const std::filesystem::path& dir, const Study& study);

}  // namespace cvdm::convergence
