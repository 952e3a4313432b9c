#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvdm {

/// Four-dimensional NCHW extent. Scalars are {1,1,1,1}.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] int dim(int i) const { return std::array<int, 4>{n, c, h, w}[i]; }
  [[nodiscard]] std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.n == b.n && a.c == b.c && a.h == b.h && a.w == b.w;
  }
  friend bool operator!=(const Shape& a, const Shape& b) { return !(a == b); }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major NCHW array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Eigen::ArrayXd::Zero(shape.size())) {}
  Tensor(Shape shape, Eigen::ArrayXd data) : shape_(shape), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.size()) != shape_.size()) {
      throw ShapeError("tensor data size does not match shape " + shape_.str());
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor full(Shape shape, double value) {
    return Tensor(shape, Eigen::ArrayXd::Constant(shape.size(), value));
  }
  static Tensor scalar(double value) { return full(Shape{}, value); }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return shape_.size(); }
  [[nodiscard]] Eigen::ArrayXd& data() { return data_; }
  [[nodiscard]] const Eigen::ArrayXd& data() const { return data_; }

  [[nodiscard]] std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& operator()(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  double operator()(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  [[nodiscard]] double item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_.str());
    return data_[0];
  }

  /// Copy of sample `n` as a {1,C,H,W} tensor.
  [[nodiscard]] Tensor sample(int n) const;
  /// Reinterpret with a new shape of equal size.
  [[nodiscard]] Tensor reshaped(Shape shape) const { return Tensor(shape, data_); }

  [[nodiscard]] bool all_finite() const { return data_.isFinite().all(); }

 private:
  Shape shape_{};
  Eigen::ArrayXd data_{Eigen::ArrayXd::Zero(1)};
};

/// Stack {1,C,H,W} tensors along the batch dimension.
Tensor stack_samples(const std::vector<Tensor>& samples);

/// Repeat a {1,C,H,W} tensor `n` times along the batch dimension.
Tensor repeat_batch(const Tensor& sample, int n);

}  // namespace cvdm
