#pragma once

#include "cvdm/autodiff.hpp"
#include "cvdm/rng.hpp"

#include <memory>
#include <string>
#include <vector>

namespace cvdm::nn {

/// Owns parameters; forward passes build graph nodes through ad::param.
class Module {
 public:
  virtual ~Module() = default;
  virtual void collect_parameters(std::vector<Parameter*>& out) = 0;

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    collect_parameters(out);
    return out;
  }
  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const Parameter* p : parameters()) n += p->value.size();
    return n;
  }
};

class Conv2d : public Module {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, Rng& rng, bool zero_init = false);

  ad::Var operator()(const ad::Var& x, ad::Padding padding);
  void collect_parameters(std::vector<Parameter*>& out) override;
  Parameter& bias() { return bias_; }
  Parameter& weight() { return weight_; }

 private:
  Parameter weight_;
  Parameter bias_;
};

class ConvTranspose2x2 : public Module {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(std::string name, int in_channels, int out_channels, Rng& rng);

  ad::Var operator()(const ad::Var& x);
  void collect_parameters(std::vector<Parameter*>& out) override;

 private:
  Parameter weight_;
  Parameter bias_;
};

enum class OutputActivation { kLinear, kSoftplus };

struct UNetConfig {
  int in_channels = 1;
  int out_channels = 1;
  int base_filters = 8;
  /// Number of resolutions; spatial sides must be divisible by 2^(scales-1).
  int scales = 3;
  bool instance_norm = true;
  ad::Padding padding = ad::Padding::kZero;
  OutputActivation output = OutputActivation::kLinear;
  /// Zero output weights; output then equals act(output_bias) everywhere.
  bool zero_init_output = false;
  double output_bias = 0.0;
};

/// Encoder-decoder with skip connections. Each block is two rounds of
/// 3x3 conv, softplus, optional instance norm; downsampling by 2x2 average
/// pooling and upsampling by 2x2 transposed convolution.
class UNet : public Module {
 public:
  UNet(const UNetConfig& config, Rng& rng);

  ad::Var forward(const ad::Var& x);
  void collect_parameters(std::vector<Parameter*>& out) override;
  [[nodiscard]] const UNetConfig& config() const { return config_; }
  void set_padding(ad::Padding padding) { config_.padding = padding; }

 private:
  struct Block {
    Conv2d first;
    Conv2d second;
  };
  ad::Var run_block(Block& block, const ad::Var& x);

  UNetConfig config_;
  std::vector<Block> down_;
  std::vector<ConvTranspose2x2> up_;
  std::vector<Block> up_blocks_;
  Conv2d head_;
};

/// Scalar function of time evaluated per element, with positive weights:
///   f(t) = u + sum_j w3_j * sigmoid(w2_j * u + b2_j),  u = a*t + b,
/// where a, w2, w3 are softplus-reparametrized. f is increasing in t.
/// Returns f and its first two time derivatives.
class PositiveResidualNet : public Module {
 public:
  struct Init {
    double slope = 5.0;
    double offset = -1.0;
  };
  PositiveResidualNet(std::string name, int hidden, Init init, Rng& rng);

  struct Jet {
    ad::Var value;
    ad::Var d1;
    ad::Var d2;
  };
  /// t is {B,1,1,1}. Derivative outputs are only built when `order` asks for them.
  Jet evaluate(const ad::Var& t, int order);
  void collect_parameters(std::vector<Parameter*>& out) override;

 private:
  Parameter slope_raw_;
  Parameter offset_;
  Parameter w2_raw_;
  Parameter b2_;
  Parameter w3_raw_;
};

}  // namespace cvdm::nn
