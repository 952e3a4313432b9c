#include "cvdm/optics.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>
#include <string>

namespace cvdm {
namespace {

enum class Direction { kForward, kInverse };

/// 2D DFT by rows then columns; the inverse is normalized.
Field fft2(const Field& in, Direction dir) {
  Eigen::FFT<double> fft;
  const Eigen::Index rows = in.rows(), cols = in.cols();
  Field out(rows, cols);
  Eigen::VectorXcd src, dst;
  for (Eigen::Index r = 0; r < rows; ++r) {
    src = in.row(r).transpose().matrix();
    if (dir == Direction::kForward) fft.fwd(dst, src);
    else fft.inv(dst, src);
    out.row(r) = dst.transpose().array();
  }
  for (Eigen::Index c = 0; c < cols; ++c) {
    src = out.col(c).matrix();
    if (dir == Direction::kForward) fft.fwd(dst, src);
    else fft.inv(dst, src);
    out.col(c) = dst.array();
  }
  return out;
}

double frequency(Eigen::Index k, Eigen::Index n, double pitch) {
  const Eigen::Index shifted = k <= (n - 1) / 2 ? k : k - n;
  return static_cast<double>(shifted) / (static_cast<double>(n) * pitch);
}

}  // namespace

double OpticalConfig::wavenumber() const { return 2.0 * std::numbers::pi / wavelength; }

void OpticalConfig::validate(double distance) const {
  if (!(wavelength > 0 && pitch > 0 && defocus > 0)) throw SamplingError("optics: wavelength, pitch, defocus must be > 0");
  if (height < 2 || width < 2) throw SamplingError("optics: grid must be at least 2x2");
  const double need = wavelength * std::abs(distance);
  const int n = std::min(height, width);
  if (need > n * pitch * pitch) {
    throw SamplingError("optics: Fresnel kernel undersampled: wavelength*|z| = " + std::to_string(need) +
                        " exceeds N*pitch^2 = " + std::to_string(n * pitch * pitch));
  }
}

Field fresnel_propagate_field(const Field& field, double distance, const OpticalConfig& optics) {
  if (distance == 0.0) throw std::invalid_argument("fresnel_propagate: z = 0 is the identity; skip the call");
  if (field.rows() != optics.height || field.cols() != optics.width) {
    throw std::invalid_argument("fresnel_propagate: field size does not match optics grid");
  }
  optics.validate(distance);
  Field spectrum = fft2(field, Direction::kForward);
  const std::complex<double> carrier = std::exp(std::complex<double>(0.0, optics.wavenumber() * distance));
  const double a = std::numbers::pi * optics.wavelength * distance;
  for (Eigen::Index r = 0; r < spectrum.rows(); ++r) {
    const double fy = frequency(r, spectrum.rows(), optics.pitch);
    for (Eigen::Index c = 0; c < spectrum.cols(); ++c) {
      const double fx = frequency(c, spectrum.cols(), optics.pitch);
      spectrum(r, c) *= carrier * std::exp(std::complex<double>(0.0, -a * (fx * fx + fy * fy)));
    }
  }
  return fft2(spectrum, Direction::kInverse);
}

Image fresnel_propagate(const Image& amplitude, const Image& phase, double distance, const OpticalConfig& optics) {
  if (amplitude.rows() != phase.rows() || amplitude.cols() != phase.cols()) {
    throw std::invalid_argument("fresnel_propagate: amplitude and phase differ in size");
  }
  const Field field = amplitude * (std::complex<double>(0.0, 1.0) * phase.cast<std::complex<double>>()).exp();
  return fresnel_propagate_field(field, distance, optics).abs2();
}

Image intensity_derivative(const Image& i_minus_d, const Image& i_d, double d) {
  if (!(d > 0)) throw std::invalid_argument("intensity_derivative: d must be > 0");
  return (i_minus_d - i_d) / (2.0 * d);
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 1e-6) return img;
  const Eigen::Index rows = img.rows(), cols = img.cols();
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  Eigen::ArrayXd k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k(i + radius) = std::exp(-0.5 * i * i / (sigma * sigma));
  k /= k.sum();
  // Separable: rows, then columns, with periodic wrap.
  Image tmp = Image::Zero(rows, cols), out = Image::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      for (int i = -radius; i <= radius; ++i) tmp(r, c) += k(i + radius) * img(r, ((c + i) % cols + cols) % cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      for (int i = -radius; i <= radius; ++i) out(r, c) += k(i + radius) * tmp(((r + i) % rows + rows) % rows, c);
  return out;
}

}  // namespace cvdm
