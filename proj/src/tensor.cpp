#include "cvdm/tensor.hpp"

namespace cvdm {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor Tensor::sample(int n) const {
  if (n < 0 || n >= shape_.n) throw ShapeError("sample index out of range");
  const Shape s{1, shape_.c, shape_.h, shape_.w};
  const auto len = static_cast<Eigen::Index>(s.size());
  return Tensor(s, data_.segment(static_cast<Eigen::Index>(n) * len, len));
}

Tensor stack_samples(const std::vector<Tensor>& samples) {
  if (samples.empty()) throw ShapeError("cannot stack zero samples");
  Shape s = samples.front().shape();
  if (s.n != 1) throw ShapeError("stack_samples expects {1,C,H,W} inputs");
  s.n = static_cast<int>(samples.size());
  Tensor out(s);
  const auto len = static_cast<Eigen::Index>(samples.front().size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].shape() != samples.front().shape()) {
      throw ShapeError("stack_samples: mismatched shapes " + samples[i].shape().str());
    }
    out.data().segment(static_cast<Eigen::Index>(i) * len, len) = samples[i].data();
  }
  return out;
}

Tensor repeat_batch(const Tensor& sample, int n) {
  return stack_samples(std::vector<Tensor>(static_cast<std::size_t>(n), sample));
}

}  // namespace cvdm
