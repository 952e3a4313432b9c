#include "cvdm/sampler.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <tuple>

namespace cvdm {

void SamplerConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("sampler: T must be >= 1");
  if (n_samples < 1) throw std::invalid_argument("sampler: n_samples must be >= 1");
  if (beta_mode == BetaMode::kLinear && !(0 < linear_start && linear_start <= linear_end && linear_end < 1)) {
    throw std::invalid_argument("sampler: linear beta needs 0 < start <= end < 1");
  }
}

void parse_beta_mode(const std::string& text, SamplerConfig& config) {
  if (text == "learned") {
    config.beta_mode = BetaMode::kLearned;
  } else if (text == "ratio") {
    config.beta_mode = BetaMode::kRatio;
  } else if (text.rfind("linear", 0) == 0) {
    config.beta_mode = BetaMode::kLinear;
    if (text != "linear") {
      const auto first = text.find(':'), second = text.find(':', first + 1);
      if (first != 6 || second == std::string::npos) {
        throw std::invalid_argument("beta mode '" + text + "': expected linear:START:END");
      }
      try {
        config.linear_start = std::stod(text.substr(first + 1, second - first - 1));
        config.linear_end = std::stod(text.substr(second + 1));
      } catch (const std::logic_error&) {
        throw std::invalid_argument("beta mode '" + text + "': bad number");
      }
    }
  } else {
    throw std::invalid_argument("beta mode must be learned, ratio or linear:START:END, got '" + text + "'");
  }
  config.validate();
}

std::string beta_mode_string(const SamplerConfig& config) {
  switch (config.beta_mode) {
    case BetaMode::kLearned: return "learned";
    case BetaMode::kRatio: return "ratio";
    case BetaMode::kLinear: {
      std::ostringstream os;
      os << std::setprecision(17) << "linear:" << config.linear_start << ':' << config.linear_end;
      return os.str();
    }
  }
  return "learned";
}

SamplerTables sampler_tables(ScheduleModel& schedule, const Tensor& x, const SamplerConfig& config) {
  config.validate();
  const int T = config.steps;
  SamplerTables tab;
  tab.steps = T;
  tab.beta.resize(static_cast<std::size_t>(T) + 1);
  tab.gamma.resize(static_cast<std::size_t>(T) + 1);
  const auto clip = [](Tensor& b) { b.data() = b.data().max(kBetaClip).min(1.0 - kBetaClip); };

  Tensor prev = gamma(schedule, 0.0, x);
  const Shape ys = prev.shape();
  for (int i = 1; i <= T; ++i) {
    const double t = static_cast<double>(i) / T;
    Tensor& b = tab.beta[static_cast<std::size_t>(i)];
    Tensor& g = tab.gamma[static_cast<std::size_t>(i)];
    switch (config.beta_mode) {
      case BetaMode::kLearned:
        b = beta(schedule, t, x);
        b.data() /= T;
        break;
      case BetaMode::kRatio: {
        g = gamma(schedule, t, x);
        b = Tensor(ys);
        b.data() = 1.0 - g.data() / prev.data().max(1e-300);
        prev = g;
        break;
      }
      case BetaMode::kLinear: {
        const double frac = T > 1 ? static_cast<double>(i - 1) / (T - 1) : 0.0;
        b = Tensor::full(ys, config.linear_start + (config.linear_end - config.linear_start) * frac);
        break;
      }
    }
    clip(b);
    if (config.beta_mode != BetaMode::kRatio) {
      g = i == 1 ? Tensor::full(ys, 1.0) : tab.gamma[static_cast<std::size_t>(i) - 1];
      g.data() *= 1.0 - b.data();
    }
  }
  return tab;
}

TensorPredictor as_tensor_predictor(Denoiser& denoiser) {
  return [&denoiser](const Tensor& z, const Tensor& g, const Tensor& x) { return predict_noise(denoiser, z, g, x); };
}

Tensor ancestral_step(const Tensor& z, const Tensor& beta, const Tensor& gamma, const Tensor& eps_hat,
                      const Tensor* noise) {
  Tensor out(z.shape());
  const Eigen::ArrayXd one_minus_gamma = (1.0 - gamma.data()).max(kSigmaFloor);
  out.data() = (z.data() - beta.data() / one_minus_gamma.sqrt() * eps_hat.data()) / (1.0 - beta.data()).sqrt();
  if (noise != nullptr) out.data() += beta.data().sqrt() * noise->data();
  return out;
}

Tensor sample(const Tensor& x, const TensorPredictor& predictor, const SamplerTables& tables, std::uint64_t seed,
              std::uint64_t first_chain) {
  const Shape ys = tables.beta.at(1).shape();
  if (ys.n != x.shape().n) throw ShapeError("sampler tables do not match the batch of x");
  const Shape one{1, ys.c, ys.h, ys.w};
  std::vector<Rng> chains;
  for (int b = 0; b < ys.n; ++b) chains.emplace_back(seed, "chain", first_chain + static_cast<std::uint64_t>(b));
  const auto draw = [&] {
    Tensor n(ys);
    const auto len = static_cast<Eigen::Index>(one.size());
    for (int b = 0; b < ys.n; ++b) n.data().segment(b * len, len) = chains[static_cast<std::size_t>(b)].normal_tensor(one).data();
    return n;
  };

  Tensor z = draw();
  for (int i = tables.steps; i >= 1; --i) {
    const auto k = static_cast<std::size_t>(i);
    const Tensor eps_hat = predictor(z, tables.gamma[k], x);
    if (i > 1) {
      const Tensor noise = draw();
      z = ancestral_step(z, tables.beta[k], tables.gamma[k], eps_hat, &noise);
    } else {
      z = ancestral_step(z, tables.beta[k], tables.gamma[k], eps_hat, nullptr);
    }
    if (!z.all_finite()) {
      throw SamplerError("non-finite latent at sampler step " + std::to_string(i) + " of " +
                          std::to_string(tables.steps));
    }
  }
  return z;
}

Tensor sample(const Tensor& x, const TensorPredictor& predictor, ScheduleModel& schedule, const SamplerConfig& config,
              std::uint64_t first_chain) {
  return sample(x, predictor, sampler_tables(schedule, x, config), config.seed, first_chain);
}

std::pair<Tensor, Tensor> mean_and_variance(const std::vector<Tensor>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("variance needs at least 2 samples");
  Tensor mean(samples.front().shape()), var(samples.front().shape());
  for (const Tensor& s : samples) mean.data() += s.data();
  mean.data() /= static_cast<double>(samples.size());
  for (const Tensor& s : samples) var.data() += (s.data() - mean.data()).square();
  var.data() /= static_cast<double>(samples.size() - 1);
  return {mean, var};
}

SampleBatch sample_batch(const Tensor& x, const TensorPredictor& predictor, ScheduleModel& schedule,
                         const SamplerConfig& config) {
  if (x.shape().n != 1) throw ShapeError("sample_batch expects a single condition {1,C,H,W}");
  if (config.n_samples < 2) throw std::invalid_argument("sample_batch needs n_samples >= 2 for a variance map");
  const SamplerTables one = sampler_tables(schedule, x, config);
  SamplerTables tab;
  tab.steps = one.steps;
  tab.beta.resize(one.beta.size());
  tab.gamma.resize(one.gamma.size());
  for (int i = 1; i <= one.steps; ++i) {
    const auto k = static_cast<std::size_t>(i);
    tab.beta[k] = repeat_batch(one.beta[k], config.n_samples);
    tab.gamma[k] = repeat_batch(one.gamma[k], config.n_samples);
  }
  const Tensor z = sample(repeat_batch(x, config.n_samples), predictor, tab, config.seed, 0);
  SampleBatch out;
  for (int n = 0; n < config.n_samples; ++n) out.samples.push_back(z.sample(n));
  std::tie(out.mean, out.variance) = mean_and_variance(out.samples);
  return out;
}

}  // namespace cvdm
