#pragma once

// Tape-free reverse-mode differentiation over NCHW tensors. Each Var owns a
// node holding its value and a closure that pushes its gradient to its
// parents; backward() walks the graph in reverse topological order.

#include "cvdm/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cvdm {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name_, Tensor value_)
      : name(std::move(name_)), value(std::move(value_)), grad(Tensor::zeros(value.shape())) {}
  void zero_grad() { grad.data().setZero(); }
};

namespace ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  Parameter* param = nullptr;

  void accumulate(const Tensor& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  [[nodiscard]] const Tensor& value() const { return node_->value; }
  [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
  [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
  [[nodiscard]] double item() const { return node_->value.item(); }
  [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }
  [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

[[nodiscard]] bool grad_enabled();

Var constant(Tensor value);
Var constant(double value);
/// Leaf bound to a parameter; backward() accumulates into `p.grad`.
Var param(Parameter& p);
/// Leaf that records its own gradient (readable through grad_of after backward).
Var variable(Tensor value);
[[nodiscard]] const Tensor& grad_of(const Var& v);

/// Backpropagate from a scalar.
void backward(const Var& loss);

// Elementwise arithmetic with broadcasting (each dim equal or 1).
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var softplus(const Var& a);
Var sigmoid(const Var& a);
/// Clamp values into [lo, hi]; gradient passes only where unclamped.
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a);
Var mean(const Var& a);
/// Mean over H and W: {N,C,H,W} -> {N,C,1,1}.
Var spatial_mean(const Var& a);
/// Mean over N: {N,C,H,W} -> {1,C,H,W}.
Var batch_mean(const Var& a);
Var concat_channels(const std::vector<Var>& parts);
/// Same data, new shape of equal size.
Var reshape(const Var& a, Shape shape);
/// Broadcast to a larger shape (each dim equal or 1 in `a`).
Var broadcast_to(const Var& a, Shape shape);

enum class Padding { kZero, kCircular };

/// Stride-1 "same" convolution. weight {Cout,Cin,k,k} (k odd), bias {1,Cout,1,1} or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, Padding padding = Padding::kZero);
/// Stride-2, kernel-2 transposed convolution. weight {Cin,Cout,2,2}, bias {1,Cout,1,1}.
Var conv_transpose2x2(const Var& x, const Var& weight, const Var& bias);
Var avg_pool2(const Var& x);
/// Per-sample per-channel normalization over H,W (no affine terms).
Var instance_norm(const Var& x, double eps = 1e-5);

}  // namespace ad
}  // namespace cvdm
