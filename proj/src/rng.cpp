#include "cvdm/rng.hpp"

namespace cvdm {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label, std::uint64_t index) {
  return splitmix64(splitmix64(parent ^ fnv1a(label)) + splitmix64(index + 0x632be59bd9b4e019ULL));
}

Tensor Rng::normal_tensor(Shape shape) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index i = 0; i < t.data().size(); ++i) t.data()[i] = dist(engine_);
  return t;
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Eigen::Index i = 0; i < t.data().size(); ++i) t.data()[i] = dist(engine_);
  return t;
}

}  // namespace cvdm
