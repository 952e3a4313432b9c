#include "cvdm/convergence.hpp"

#include "cvdm/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

namespace cvdm::convergence {
namespace {

Jet2<double> at(const JetFn& f, double t) { return f(Jet2<double>::variable(t)); }

std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {slope, (sy - slope * sx) / n};
}

}  // namespace

LabSchedule LabSchedule::log_linear(double hi, double lo) {
  return {"log-linear", [hi, lo](Jet2<double> t) { return exp(hi + (lo - hi) * t); }};
}

LabSchedule LabSchedule::steep_sigmoid(double k, double hi, double lo) {
  const double s0 = 1.0 / (1.0 + std::exp(0.5 * k)), s1 = 1.0 / (1.0 + std::exp(-0.5 * k));
  return {"steep-sigmoid", [=](Jet2<double> t) {
            const Jet2<double> s = (sigmoid(k * (t - 0.5)) - s0) * (1.0 / (s1 - s0));
            return exp(hi + (lo - hi) * s);
          }};
}

LabSchedule LabSchedule::from_rho(std::string name, JetFn rho) {
  return {std::move(name), [rho = std::move(rho)](Jet2<double> t) {
            const Jet2<double> g = exp(-rho(t));
            return g / (1.0 - g);
          }};
}

double Surrogate::squared_error(double t) const {
  const double d = delta * g(t);
  return elements * d * d;
}

void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights) {
  if (order < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  nodes.assign(static_cast<std::size_t>(order), 0.0);
  weights.assign(static_cast<std::size_t>(order), 0.0);
  for (int i = 0; i < (order + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = x;
      for (int k = 2; k <= order; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = order * (x * p1 - p0) / (x * x - 1);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1 - x * x) * dp * dp);
    nodes[static_cast<std::size_t>(i)] = -x;
    nodes[static_cast<std::size_t>(order - 1 - i)] = x;
    weights[static_cast<std::size_t>(i)] = weights[static_cast<std::size_t>(order - 1 - i)] = w;
  }
}

double integrate(const std::function<double(double)>& f, double a, double b, int panels, int order) {
  std::vector<double> x, w;
  gauss_legendre(order, x, w);
  const double h = (b - a) / panels;
  double sum = 0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    double part = 0;
    for (std::size_t k = 0; k < x.size(); ++k) part += w[k] * f(mid + 0.5 * h * x[k]);
    sum += 0.5 * h * part;
  }
  return sum;
}

std::vector<double> time_grid(int steps, double t_start) {
  if (steps < 2) throw std::invalid_argument("time grid needs T >= 2");
  std::vector<double> t(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) t[static_cast<std::size_t>(i)] = t_start + i * (1.0 - t_start) / (steps - 1);
  t.back() = 1.0;
  return t;
}

double discrete_loss(int steps, const LabSchedule& schedule, const Surrogate& surrogate, double t_start) {
  const std::vector<double> t = time_grid(steps, t_start);
  double sum = 0;
  double prev = at(schedule.snr, t[0]).v;
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double cur = at(schedule.snr, t[i]).v;
    sum += (prev - cur) * surrogate.squared_error(t[i]);
    prev = cur;
  }
  return 0.5 * sum;
}

double continuous_loss(const LabSchedule& schedule, const Surrogate& surrogate, double t_start, int nodes,
                       double tol) {
  constexpr int kOrder = 16;
  const int panels = std::max(1, (nodes + kOrder - 1) / kOrder);
  const auto f = [&](double t) { return -0.5 * at(schedule.snr, t).d1 * surrogate.squared_error(t); };
  const double coarse = integrate(f, t_start, 1.0, panels, kOrder);
  const double fine = integrate(f, t_start, 1.0, 2 * panels, kOrder);
  if (!std::isfinite(fine) || std::abs(fine - coarse) > tol * std::max(1.0, std::abs(fine))) {
    throw QuadratureError("continuous loss for " + schedule.name + " did not converge: " + std::to_string(coarse) +
                          " vs " + std::to_string(fine) + " after doubling the nodes");
  }
  return fine;
}

double snr2_norm(const LabSchedule& schedule, double t_start, int nodes) {
  const auto f = [&](double t) { return std::pow(at(schedule.snr, t).d2, 2); };
  return std::sqrt(integrate(f, t_start, 1.0, std::max(1, nodes / 16)));
}

double usable_start(const LabSchedule& schedule, double t_start) {
  double t = t_start;
  while (t < 0.5) {
    const Jet2<double> s = at(schedule.snr, t);
    if (std::isfinite(s.v) && std::isfinite(s.d1) && std::isfinite(s.d2)) return t;
    t *= 2;
  }
  throw std::domain_error("SNR of " + schedule.name + " is not finite anywhere on [t_start, 0.5]");
}

ConvergenceReport convergence_report(const LabSchedule& schedule, const Surrogate& surrogate,
                                     const std::vector<int>& steps, double t_start) {
  if (!std::is_sorted(steps.begin(), steps.end()) || std::adjacent_find(steps.begin(), steps.end()) != steps.end()) {
    throw std::invalid_argument("T grid must be strictly increasing");
  }
  ConvergenceReport r;
  r.schedule = schedule.name;
  r.t_start = usable_start(schedule, t_start);
  r.shifted = r.t_start != t_start;
  r.steps = steps;
  r.continuous = continuous_loss(schedule, surrogate, r.t_start);
  r.snr2_l2 = snr2_norm(schedule, r.t_start);
  std::vector<double> lx, ly;
  for (int T : steps) {
    const double lt = discrete_loss(T, schedule, surrogate, r.t_start);
    r.discrete.push_back(lt);
    r.gap.push_back(std::abs(lt - r.continuous));
    if (r.gap.back() > 0) {
      lx.push_back(std::log(static_cast<double>(T)));
      ly.push_back(std::log(r.gap.back()));
    }
  }
  if (lx.size() >= 2) std::tie(r.slope, r.intercept) = fit_line(lx, ly);
  return r;
}

Study convergence_study(const std::vector<LabSchedule>& schedules, const Surrogate& surrogate,
                        const std::vector<int>& steps) {
  if (steps.empty()) throw std::invalid_argument("empty T grid");
  double t_start = 1.0 / *std::max_element(steps.begin(), steps.end());
  for (const LabSchedule& s : schedules) t_start = std::max(t_start, usable_start(s, t_start));
  Study study;
  for (const LabSchedule& s : schedules) study.reports.push_back(convergence_report(s, surrogate, steps, t_start));
  std::vector<const ConvergenceReport*> by_norm;
  for (const auto& r : study.reports) by_norm.push_back(&r);
  std::sort(by_norm.begin(), by_norm.end(), [](auto* a, auto* b) { return a->snr2_l2 < b->snr2_l2; });
  study.dominance = by_norm.size() >= 2;
  for (std::size_t k = 1; k < by_norm.size(); ++k)
    for (std::size_t i = 0; i < steps.size(); ++i)
      if (!(by_norm[k]->gap[i] > by_norm[k - 1]->gap[i])) study.dominance = false;
  return study;
}

void write_study(const std::filesystem::path& dir, const Study& study) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "convergence.csv");
  if (!csv) throw std::runtime_error("cannot write " + (dir / "convergence.csv").string());
  csv << std::setprecision(17) << "schedule,T,L_T,L_inf,gap\n";
  nlohmann::json j = {{"dominance", study.dominance}, {"schedules", nlohmann::json::array()}};
  std::vector<io::PlotSeries> series;
  for (const ConvergenceReport& r : study.reports) {
    io::PlotSeries s{r.schedule, {}, {}};
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      csv << r.schedule << ',' << r.steps[i] << ',' << r.discrete[i] << ',' << r.continuous << ',' << r.gap[i] << '\n';
      s.x.push_back(r.steps[i]);
      s.y.push_back(std::max(r.gap[i], 1e-300));
    }
    series.push_back(std::move(s));
    j["schedules"].push_back({{"name", r.schedule},
                              {"t_start", r.t_start},
                              {"t_start_shifted", r.shifted},
                              {"T", r.steps},
                              {"L_T", r.discrete},
                              {"L_inf", r.continuous},
                              {"gap", r.gap},
                              {"slope", r.slope},
                              {"intercept", r.intercept},
                              {"snr2_l2", r.snr2_l2}});
  }
  io::write_json(dir / "convergence.json", j);
  io::write_svg_plot(dir / "convergence.svg", series,
                     {"|L_T - L_inf| against T", "T", "|L_T - L_inf|", /*log_x=*/true, /*log_y=*/true});
}

}  // namespace cvdm::convergence
