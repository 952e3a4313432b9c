#include "cvdm/diffusion.hpp"
#include "cvdm/losses.hpp"
#include "toy_models.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cvdm;

namespace {

/// Midpoint grid of n times as a {n,1,1,1} batch, with a matching scalar condition.
std::vector<double> midpoints(int n, double hi = 1.0) {
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = hi * (i + 0.5) / n;
  return t;
}

ad::Var lambda_for(ScheduleModel& s, int n) { return s.lambda(ad::constant(Tensor::zeros(Shape{n, 1, 1, 1}))); }

/// eps_hat recovers the injected noise exactly for a known target y.
NoisePredictor oracle_for(const Tensor& y) {
  return [y](const ad::Var& z, const ad::Var& gamma, const ad::Var&) {
    return (z - ad::sqrt(gamma) * ad::constant(y)) / ad::sqrt(1.0 - gamma);
  };
}

NoisePredictor zero_predictor() {
  return [](const ad::Var& z, const ad::Var&, const ad::Var&) { return 0.0 * z; };
}

}  // namespace

TEST(LossBeta, MatchedFixtureHasZeroResidual) {
  auto s = AnalyticSchedule::linear(10.0);
  const int n = 64;
  const BetaLoss lb = loss_beta(s, lambda_for(s, n), time_batch(midpoints(n)));
  EXPECT_LT(lb.residual.item(), 1e-20);
  EXPECT_NEAR(lb.boundary.item(), std::exp(-20.0), 1e-20);
}

TEST(LossBeta, MismatchedFixtureMatchesQuadrature) {
  auto s = AnalyticSchedule([](Jet2<double> t) { return 10.0 * t; }, [](double) { return 5.0; }, Tensor::scalar(1.0));
  const int n = 4000;
  const BetaLoss lb = loss_beta(s, lambda_for(s, n), time_batch(midpoints(n)));
  const double oracle = 1.25 * (1.0 - std::exp(-20.0));
  EXPECT_NEAR(lb.residual.item(), oracle, 1e-5);
}

TEST(LossBeta, ConstantScheduleHitsOnlyTheEndBoundary) {
  auto s = AnalyticSchedule([](Jet2<double> t) { return 0.0 * t; }, [](double) { return 0.0; }, Tensor::scalar(1.0));
  const BetaLoss lb = loss_beta(s, lambda_for(s, 3), time_batch({0.1, 0.5, 0.9}));
  EXPECT_EQ(lb.residual.item(), 0.0);
  EXPECT_DOUBLE_EQ(lb.total.item(), 1.0);
}

TEST(KlPrior, ClosedFormValues) {
  const Tensor y = Tensor::full(Shape{1, 1, 1, 1}, 3.0);
  EXPECT_EQ(kl_prior_from_gamma(ad::constant(Tensor::scalar(0.0)), ad::constant(y)).item(), 0.0);
  // mean 0.1, variance 0.9: gamma = 0.1, y^2 * gamma = 0.01.
  const double g = 0.1;
  const Tensor y1 = Tensor::scalar(std::sqrt(0.01 / g));
  const double kl = kl_prior_from_gamma(ad::constant(Tensor::scalar(g)), ad::constant(y1)).item();
  EXPECT_NEAR(kl, 0.5 * (0.9 + 0.01 - 1 - std::log(0.9)), 1e-15);
  EXPECT_NEAR(kl, 7.68e-3, 1e-5);
}

TEST(KlPrior, AgreesWithMonteCarlo) {
  Rng rng(11);
  for (int k = 0; k < 5; ++k) {
    const double g = rng.uniform(0.01, 0.5), y = rng.uniform(-1, 1);
    const double mu = std::sqrt(g) * y, var = 1 - g;
    const double kl = kl_prior_from_gamma(ad::constant(Tensor::scalar(g)), ad::constant(Tensor::scalar(y))).item();
    const int n = 200000;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      const double z = mu + std::sqrt(var) * rng.normal();
      acc += -0.5 * std::log(var) - 0.5 * (z - mu) * (z - mu) / var + 0.5 * z * z;
    }
    EXPECT_NEAR(acc / n, kl, 3e-3);
  }
}

TEST(KlPrior, NonNegativeAndDecreasingInGamma) {
  Rng rng(12);
  for (int k = 0; k < 1000; ++k) {
    const double g = rng.uniform(0.0, 0.999), y = rng.uniform(-3, 3);
    EXPECT_GE(kl_prior_from_gamma(ad::constant(Tensor::scalar(g)), ad::constant(Tensor::scalar(y))).item(), 0.0);
  }
  const ad::Var y = ad::constant(Tensor::scalar(0.8));
  double prev = INFINITY;
  for (double g = 0.9; g > 0; g -= 0.05) {
    const double kl = kl_prior_from_gamma(ad::constant(Tensor::scalar(g)), y).item();
    EXPECT_LT(kl, prev);
    prev = kl;
  }
  EXPECT_THROW(kl_prior_from_gamma(ad::constant(Tensor::scalar(1.0)), y), SingularityError);
}

TEST(DiffusionLoss, OracleZeroAndFixedDraw) {
  auto s = AnalyticSchedule::linear(4.0);
  Rng rng(13);
  const Tensor y = rng.normal_tensor(Shape{2, 1, 3, 3});
  const ad::Var x = ad::constant(Tensor::zeros(Shape{2, 1, 3, 3}));
  const ScheduleTerms terms = schedule_terms(s, s.lambda(x), time_batch({0.3, 0.8}), 0);
  const ad::Var eps = ad::constant(rng.normal_tensor(y.shape()));
  EXPECT_LT(loss_diffusion_hat(oracle_for(y), ad::constant(y), x, terms, eps).item(), 1e-25);

  Tensor e(Shape{1, 1, 1, 2});
  e.data() << 0.3, -0.1;
  Tensor eh(Shape{1, 1, 1, 2});
  eh.data() << 0.0, 0.1;
  const NoisePredictor fixed = [eh](const ad::Var&, const ad::Var&, const ad::Var&) { return ad::constant(eh); };
  const ad::Var x1 = ad::constant(Tensor::zeros(e.shape()));
  const ScheduleTerms t1 = schedule_terms(s, s.lambda(x1), time_batch({0.5}), 0);
  EXPECT_NEAR(loss_diffusion_hat(fixed, ad::constant(e), x1, t1, ad::constant(e)).item(), 0.065, 1e-15);
}

TEST(DiffusionLoss, ZeroPredictorIsHalfChiSquare) {
  auto s = AnalyticSchedule::linear(4.0);
  Rng rng(14);
  const int d = 16, n = 4000;
  const Tensor y = Tensor::zeros(Shape{n, 1, 4, 4});
  const ad::Var x = ad::constant(y);
  std::vector<double> t(n, 0.5);
  const ScheduleTerms terms = schedule_terms(s, s.lambda(x), time_batch(t), 0);
  const double l = loss_diffusion_hat(zero_predictor(), ad::constant(y), x, terms,
                                      ad::constant(rng.normal_tensor(y.shape())))
                       .item();
  // 1/2 chi^2_d has variance d/2.
  EXPECT_NEAR(l, d / 2.0, 3 * std::sqrt(d / 2.0 / n));
}

TEST(GammaReg, PolynomialAndExponentialFixtures) {
  // gamma = 1 - t^2 through rho = -log(1 - t^2).
  auto quad = AnalyticSchedule([](Jet2<double> t) { return -log(1.0 - t * t); }, [](double) { return 0.0; },
                               Tensor::scalar(1.0));
  const std::vector<double> t = {0.05, 0.3, 0.6, 0.85};
  const ad::Var lam = lambda_for(quad, 4);
  EXPECT_NEAR(loss_gamma_reg(quad, lam, time_batch(t)).item(), 4.0, 1e-10);
  LossOptions fd;
  fd.gamma_derivative = GammaDerivative::kFiniteDifference;
  EXPECT_NEAR(loss_gamma_reg(quad, lam, time_batch(t), fd).item(), 4.0, 1e-6);

  auto expo = AnalyticSchedule::linear(10.0);
  const int n = 4000;
  EXPECT_NEAR(loss_gamma_reg(expo, lambda_for(expo, n), time_batch(midpoints(n))).item(),
              500.0 * (1 - std::exp(-20.0)), 0.01);

  auto flat = AnalyticSchedule([](Jet2<double> t) { return 0.0 * t; }, [](double) { return 0.0; }, Tensor::scalar(1.0));
  EXPECT_EQ(loss_gamma_reg(flat, lambda_for(flat, 4), time_batch(t)).item(), 0.0);
}

TEST(LossTotal, OracleDenoiserLeavesPriorAndBoundary) {
  auto s = AnalyticSchedule::linear(10.0);
  Rng rng(15);
  const Tensor x = Tensor::zeros(Shape{3, 1, 2, 2});
  const Tensor y = rng.uniform_tensor(x.shape(), 0.0, 1.0);
  const LossResult r = loss_total(s, oracle_for(y), x, y, 0.0, rng);
  EXPECT_LT(r.parts.l_inf_hat, 1e-20);
  EXPECT_NEAR(r.parts.l_beta, 4 * std::exp(-20.0), 1e-20);
  EXPECT_NEAR(r.parts.total, r.parts.kl_prior + r.parts.l_beta, 1e-15);
  EXPECT_GT(r.parts.l_gamma, 0.0);
}

TEST(LossTotal, BreakdownAddsUpAndIsDeterministic) {
  test_support::ToySchedule s(2.0, 1.5, Tensor::full(Shape{1, 1, 2, 2}, 1.3));
  test_support::ToyPredictor p(0.4, 0.2);
  Rng data(16);
  const Tensor x = Tensor::zeros(Shape{2, 1, 2, 2});
  const Tensor y = data.uniform_tensor(x.shape(), 0.0, 1.0);
  Rng r1(17), r2(17);
  const LossResult a = loss_total(s, p.predictor(), x, y, 0.3, r1);
  const LossResult b = loss_total(s, p.predictor(), x, y, 0.3, r2);
  EXPECT_EQ(a.parts.total, b.parts.total);
  EXPECT_NEAR(a.parts.total, a.parts.l_beta + a.parts.kl_prior + a.parts.l_inf_hat + 0.3 * a.parts.l_gamma, 1e-12);
  Rng r3(17);
  const LossResult c = loss_total(s, p.predictor(), x, y, 0.0, r3);
  EXPECT_EQ(c.parts.total, c.parts.l_beta + c.parts.kl_prior + c.parts.l_inf_hat);
}

TEST(LossTotal, GradientsMatchFiniteDifferences) {
  Tensor lam(Shape{1, 1, 1, 2});
  lam.data() << 1.0, 2.0;
  test_support::ToySchedule s(1.2, 0.7, lam);
  test_support::ToyPredictor p(0.3, -0.2);
  const Tensor x = Tensor::zeros(Shape{1, 1, 1, 2});
  Tensor y(x.shape());
  y.data() << 0.4, 0.9;
  Tensor eps(x.shape());
  eps.data() << 0.5, -1.1;
  std::vector<Parameter*> params = s.parameters();
  for (Parameter* q : p.parameters()) params.push_back(q);
  for (auto mode : {GammaDerivative::kJet, GammaDerivative::kFiniteDifference}) {
    LossOptions opt;
    opt.gamma_derivative = mode;
    const double err = test_support::parameter_gradcheck(
        [&] { return loss_total(s, p.predictor(), x, y, {0.37}, eps, 0.5, opt).total; }, params);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(LossTotal, SnrWeightedVariantIsOptIn) {
  test_support::ToySchedule s(1.2, 0.7, Tensor::scalar(1.0));
  test_support::ToyPredictor p(0.3, -0.2);
  const Tensor x = Tensor::zeros(Shape{1, 1, 1, 1});
  const Tensor y = Tensor::scalar(0.5);
  const Tensor eps = Tensor::scalar(0.8);
  const double base = loss_total(s, p.predictor(), x, y, {0.4}, eps, 0.0).parts.l_inf_hat;
  LossOptions opt;
  opt.snr_weight = 1.0;
  const double weighted = loss_total(s, p.predictor(), x, y, {0.4}, eps, 0.0, opt).parts.l_inf_hat;
  // -SNR'/SNR = lambda rho' / (1 - gamma).
  const double rho1 = 1.2 + 2 * 0.7 * 0.4, g = std::exp(-(1.2 * 0.4 + 0.7 * 0.16));
  EXPECT_NEAR(weighted, base * rho1 / (1 - g), 1e-12);
}
