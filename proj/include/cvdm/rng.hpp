#pragma once

#include "cvdm/tensor.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace cvdm {

/// Child seed for stream (`label`, `index`) under `parent`. One --seed feeds
/// every stochastic stage through this function, so streams never collide and
/// do not depend on the order in which they are created.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t parent, std::string_view label, std::uint64_t index = 0)
      : engine_(derive_seed(parent, label, index)) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::uint64_t next() { return engine_(); }

  Tensor normal_tensor(Shape shape);
  Tensor uniform_tensor(Shape shape, double lo, double hi);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cvdm
