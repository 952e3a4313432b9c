#include "cvdm/diffusion.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cvdm;

namespace {

Tensor s(double v) { return Tensor::scalar(v); }

struct Moments {
  double mean;
  double var;
};

/// Posterior of z_{i-1} given z_i and y by brute-force Bayes on a grid.
Moments grid_posterior(double g_prev, double g_cur, double z, double y) {
  const double beta = 1.0 - g_cur / g_prev;
  const double prior_mean = std::sqrt(g_prev) * y;
  const double prior_var = 1.0 - g_prev;
  const double sd = std::sqrt(prior_var);
  const int n = 40001;
  const double lo = prior_mean - 12 * sd, hi = prior_mean + 12 * sd;
  const double dz = (hi - lo) / (n - 1);
  double w_sum = 0, m1 = 0, m2 = 0;
  for (int k = 0; k < n; ++k) {
    const double u = lo + k * dz;
    const double lp = -0.5 * (u - prior_mean) * (u - prior_mean) / prior_var;
    const double r = z - std::sqrt(1.0 - beta) * u;
    const double ll = -0.5 * r * r / beta;
    const double w = std::exp(lp + ll);
    w_sum += w;
    m1 += w * u;
    m2 += w * u * u;
  }
  const double mean = m1 / w_sum;
  return {mean, m2 / w_sum - mean * mean};
}

}  // namespace

TEST(Diffusion, SampleForwardArithmetic) {
  EXPECT_NEAR(sample_forward(s(2.0), s(0.64), s(0.5)).item(), 1.9, 1e-15);
  EXPECT_EQ(sample_forward(s(0.37), s(1.0), s(-1.3)).item(), 0.37);
  EXPECT_THROW(sample_forward(s(1.0), s(0.5), Tensor::zeros(Shape{1, 1, 1, 2})), ShapeError);
}

TEST(Diffusion, ForwardMarginalMoments) {
  auto sched = AnalyticSchedule::linear(2.0);
  const Tensor x = Tensor::zeros(Shape{1, 1, 1, 1});
  Rng rng(1);
  const int n = 100000;
  const double y = 1.0, t = 0.4;
  const double g = gamma(sched, t, x).item();
  double m = 0, m2 = 0;
  for (int k = 0; k < n; ++k) {
    const double z = sample_forward(sched, s(y), x, t, s(rng.normal())).item();
    m += z;
    m2 += z * z;
  }
  m /= n;
  const double var = m2 / n - m * m;
  EXPECT_NEAR(m, std::sqrt(g) * y, 3 * std::sqrt((1 - g) / n));
  EXPECT_NEAR(var, 1 - g, 3 * (1 - g) * std::sqrt(2.0 / n));
  // Unit second moment is preserved.
  const double var_z2 = 2 * (1 - g) * (1 - g) + 4 * g * y * y * (1 - g);
  EXPECT_NEAR(m2 / n, 1.0, 3 * std::sqrt(var_z2 / n));
}

TEST(Diffusion, TransitionFromRatio) {
  const TransitionParams p = transition_from_gammas(s(0.8), s(0.6));
  EXPECT_NEAR(p.var.item(), 0.25, 1e-15);
  EXPECT_NEAR(p.mean_coeff.item(), std::sqrt(0.75), 1e-15);
  EXPECT_NEAR(p.mean_coeff.item(), 0.8660, 1e-4);
  EXPECT_EQ(transition_from_gammas(s(0.3), s(0.3)).var.item(), 0.0);
}

TEST(Diffusion, ChainedTransitionsMatchForwardMarginal) {
  auto sched = AnalyticSchedule::linear(3.0);
  const Tensor x = Tensor::zeros(Shape{1, 1, 1, 1});
  const int T = 10, i = 6;
  const TransitionParams a = transition_params(sched, i - 1, T, x);
  const TransitionParams b = transition_params(sched, i, T, x);
  const double g0 = gamma(sched, (i - 2.0) / T, x).item();
  const double gi = gamma(sched, static_cast<double>(i) / T, x).item();
  Rng rng(2);
  const int n = 100000;
  const double y = 0.7;
  double m = 0, m2 = 0;
  for (int k = 0; k < n; ++k) {
    double z = std::sqrt(g0) * y + std::sqrt(1 - g0) * rng.normal();
    z = a.mean_coeff.item() * z + std::sqrt(a.var.item()) * rng.normal();
    z = b.mean_coeff.item() * z + std::sqrt(b.var.item()) * rng.normal();
    m += z;
    m2 += z * z;
  }
  m /= n;
  const double var = m2 / n - m * m;
  EXPECT_NEAR(m, std::sqrt(gi) * y, 3 * std::sqrt((1 - gi) / n));
  EXPECT_NEAR(var, 1 - gi, 3 * (1 - gi) * std::sqrt(2.0 / n));
}

TEST(Diffusion, PosteriorWorkedExample) {
  const PosteriorParams p = posterior_from_gammas(s(0.8), s(0.6), s(0.5), s(1.0));
  EXPECT_NEAR(p.mu.item(), 0.77552, 1e-5);
  EXPECT_NEAR(p.var.item(), 0.125, 1e-15);
  const Moments oracle = grid_posterior(0.8, 0.6, 0.5, 1.0);
  EXPECT_NEAR(p.mu.item(), oracle.mean, 1e-6);
  EXPECT_NEAR(p.var.item(), oracle.var, 1e-6);
}

TEST(Diffusion, PosteriorMatchesGridBayes) {
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const double g_prev = rng.uniform(0.05, 0.95);
    const double g_cur = g_prev * rng.uniform(0.2, 0.99);
    const double z = rng.normal(), y = rng.uniform(-1, 1);
    const PosteriorParams p = posterior_from_gammas(s(g_prev), s(g_cur), s(z), s(y));
    const Moments oracle = grid_posterior(g_prev, g_cur, z, y);
    EXPECT_NEAR(p.mu.item(), oracle.mean, 1e-6);
    EXPECT_NEAR(p.var.item(), oracle.var, 1e-6);
  }
}

TEST(Diffusion, PosteriorSpecialCases) {
  // Noiseless-consistent pair: z = sqrt(gamma_i) y.
  const double gp = 0.7, gc = 0.4, y = 0.9;
  const PosteriorParams p = posterior_from_gammas(s(gp), s(gc), s(std::sqrt(gc) * y), s(y));
  EXPECT_NEAR(p.mu.item(), std::sqrt(gp) * y, 1e-14);
  EXPECT_NEAR(grid_posterior(gp, gc, std::sqrt(gc) * y, y).mean, std::sqrt(gp) * y, 1e-6);
  // Degenerate step.
  const PosteriorParams d = posterior_from_gammas(s(0.5), s(0.5), s(0.3), s(1.0));
  EXPECT_NEAR(d.mu.item(), 0.3, 1e-15);
  EXPECT_EQ(d.var.item(), 0.0);
  EXPECT_THROW(posterior_from_gammas(s(1.0), s(1.0), s(0.3), s(1.0)), SingularityError);
}

TEST(Diffusion, PosteriorConsistency) {
  // z_{i-1} ~ posterior, then forward transition: recovers q(z_i | y).
  const double gp = 0.6, gc = 0.35, y = 0.5;
  const TransitionParams tr = transition_from_gammas(s(gp), s(gc));
  Rng rng(4);
  const int n = 100000;
  double m = 0, m2 = 0;
  for (int k = 0; k < n; ++k) {
    const double zi = std::sqrt(gc) * y + std::sqrt(1 - gc) * rng.normal();
    const PosteriorParams p = posterior_from_gammas(s(gp), s(gc), s(zi), s(y));
    const double zp = p.mu.item() + std::sqrt(p.var.item()) * rng.normal();
    const double zn = tr.mean_coeff.item() * zp + std::sqrt(tr.var.item()) * rng.normal();
    m += zn;
    m2 += zn * zn;
  }
  m /= n;
  EXPECT_NEAR(m, std::sqrt(gc) * y, 3 * std::sqrt((1 - gc) / n));
  EXPECT_NEAR(m2 / n - m * m, 1 - gc, 3 * (1 - gc) * std::sqrt(2.0 / n));
}

TEST(Diffusion, PredictYFromEps) {
  EXPECT_NEAR(predict_y_from_eps(s(1.0), s(0.25), s(0.4)).item(), (1 - std::sqrt(0.75) * 0.4) / 0.5, 1e-15);
  EXPECT_NEAR(predict_y_from_eps(s(1.0), s(0.25), s(0.4)).item(), 1.30718, 1e-5);
  EXPECT_EQ(predict_y_from_eps(s(0.42), s(1.0), s(5.0)).item(), 0.42);
  EXPECT_THROW(predict_y_from_eps(s(0.42), s(1e-9), s(5.0)), SingularityError);

  Rng rng(5);
  const Tensor y = rng.normal_tensor(Shape{2, 1, 3, 3});
  const Tensor eps = rng.normal_tensor(y.shape());
  const Tensor g = rng.uniform_tensor(y.shape(), 0.05, 1.0);
  const Tensor back = predict_y_from_eps(sample_forward(y, g, eps), g, eps);
  EXPECT_LT((back.data() - y.data()).abs().maxCoeff(), 1e-13);
}
