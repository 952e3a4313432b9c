#include "cvdm/nn.hpp"

#include <cmath>

namespace cvdm::nn {
namespace {

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

}  // namespace

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, Rng& rng, bool zero_init)
    : weight_(name + ".weight", Tensor::zeros(Shape{out_channels, in_channels, kernel, kernel})),
      bias_(name + ".bias", Tensor::zeros(Shape{1, out_channels, 1, 1})) {
  if (!zero_init) {
    const double stddev = std::sqrt(1.0 / (in_channels * kernel * kernel));
    weight_.value = rng.normal_tensor(weight_.value.shape());
    weight_.value.data() *= stddev;
  }
}

ad::Var Conv2d::operator()(const ad::Var& x, ad::Padding padding) {
  return ad::conv2d(x, ad::param(weight_), ad::param(bias_), padding);
}

void Conv2d::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

ConvTranspose2x2::ConvTranspose2x2(std::string name, int in_channels, int out_channels, Rng& rng)
    : weight_(name + ".weight", rng.normal_tensor(Shape{in_channels, out_channels, 2, 2})),
      bias_(name + ".bias", Tensor::zeros(Shape{1, out_channels, 1, 1})) {
  weight_.value.data() *= std::sqrt(1.0 / in_channels);
}

ad::Var ConvTranspose2x2::operator()(const ad::Var& x) {
  return ad::conv_transpose2x2(x, ad::param(weight_), ad::param(bias_));
}

void ConvTranspose2x2::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

UNet::UNet(const UNetConfig& config, Rng& rng) : config_(config) {
  if (config.scales < 1 || config.base_filters < 1) throw std::invalid_argument("UNet needs scales, filters >= 1");
  int channels = config.in_channels;
  for (int s = 0; s < config.scales; ++s) {
    const int f = config.base_filters << s;
    const std::string name = "down" + std::to_string(s);
    down_.push_back(Block{Conv2d(name + ".0", channels, f, 3, rng), Conv2d(name + ".1", f, f, 3, rng)});
    channels = f;
  }
  for (int s = config.scales - 2; s >= 0; --s) {
    const int f = config.base_filters << s;
    const std::string name = "up" + std::to_string(s);
    up_.emplace_back(name + ".t", 2 * f, f, rng);
    up_blocks_.push_back(Block{Conv2d(name + ".0", 2 * f, f, 3, rng), Conv2d(name + ".1", f, f, 3, rng)});
  }
  head_ = Conv2d("head", config.base_filters, config.out_channels, 1, rng, config.zero_init_output);
  head_.bias().value.data().setConstant(config.output_bias);
}

ad::Var UNet::run_block(Block& block, const ad::Var& x) {
  ad::Var h = ad::softplus(block.first(x, config_.padding));
  if (config_.instance_norm) h = ad::instance_norm(h);
  h = ad::softplus(block.second(h, config_.padding));
  if (config_.instance_norm) h = ad::instance_norm(h);
  return h;
}

ad::Var UNet::forward(const ad::Var& x) {
  const Shape s = x.shape();
  const int factor = 1 << (config_.scales - 1);
  if (s.c != config_.in_channels) {
    throw ShapeError("UNet expects " + std::to_string(config_.in_channels) + " channels, got " + s.str());
  }
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("UNet spatial dims must be divisible by " + std::to_string(factor) + ", got " + s.str());
  }
  std::vector<ad::Var> skips;
  ad::Var h = x;
  for (int level = 0; level < config_.scales; ++level) {
    h = run_block(down_[static_cast<std::size_t>(level)], h);
    if (level + 1 < config_.scales) {
      skips.push_back(h);
      h = ad::avg_pool2(h);
    }
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    h = up_[i](h);
    h = ad::concat_channels({h, skips[skips.size() - 1 - i]});
    h = run_block(up_blocks_[i], h);
  }
  ad::Var out = head_(h, config_.padding);
  if (config_.output == OutputActivation::kSoftplus) out = ad::softplus(out);
  return out;
}

void UNet::collect_parameters(std::vector<Parameter*>& out) {
  for (auto& b : down_) {
    b.first.collect_parameters(out);
    b.second.collect_parameters(out);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    up_[i].collect_parameters(out);
    up_blocks_[i].first.collect_parameters(out);
    up_blocks_[i].second.collect_parameters(out);
  }
  head_.collect_parameters(out);
}

PositiveResidualNet::PositiveResidualNet(std::string name, int hidden, Init init, Rng& rng)
    : slope_raw_(name + ".slope", Tensor::scalar(inverse_softplus(init.slope))),
      offset_(name + ".offset", Tensor::scalar(init.offset)),
      w2_raw_(name + ".w2", Tensor::zeros(Shape{1, hidden, 1, 1})),
      b2_(name + ".b2", Tensor::zeros(Shape{1, hidden, 1, 1})),
      w3_raw_(name + ".w3", Tensor::full(Shape{1, hidden, 1, 1}, -6.0)) {
  w2_raw_.value = rng.normal_tensor(w2_raw_.value.shape());
  b2_.value = rng.uniform_tensor(b2_.value.shape(), -4.0, 4.0);
}

PositiveResidualNet::Jet PositiveResidualNet::evaluate(const ad::Var& t, int order) {
  using namespace ad;
  const Var a = softplus(param(slope_raw_));
  const Var w2 = softplus(param(w2_raw_));
  const Var b2 = param(b2_);
  // {1,H,1,1} doubles as the 1x1-conv weight that sums over hidden units.
  const Var w3 = softplus(param(w3_raw_));

  const Var u = a * t + param(offset_);
  const Var hpre = u * w2 + b2;  // {B,H,1,1}
  const Var s = sigmoid(hpre);
  const Var v = conv2d(s, w3, Var{});
  Jet out;
  out.value = u + v;
  if (order < 1) return out;

  const Var dh = a * w2;  // dh/dt, {1,H,1,1}
  const Var ds_dh = s * (1.0 - s);
  out.d1 = a + conv2d(ds_dh * dh, w3, Var{});
  if (order < 2) return out;

  const Var d2s_dh2 = ds_dh * (1.0 - 2.0 * s);
  out.d2 = conv2d(d2s_dh2 * square(dh), w3, Var{});
  return out;
}

void PositiveResidualNet::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&slope_raw_);
  out.push_back(&offset_);
  out.push_back(&w2_raw_);
  out.push_back(&b2_);
  out.push_back(&w3_raw_);
}

}  // namespace cvdm::nn
