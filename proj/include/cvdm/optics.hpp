#pragma once

// Paraxial free-space propagation for synthetic phase-imaging data.

#include "cvdm/rng.hpp"
#include "cvdm/tensor.hpp"

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>

namespace cvdm {

using Field = Eigen::ArrayXXcd;
using Image = Eigen::ArrayXXd;

class SamplingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct OpticalConfig {
  double wavelength = 550e-9;  ///< meters
  double defocus = 2e-6;       ///< meters
  double pitch = 0.3e-6;       ///< meters per pixel
  int height = 32;
  int width = 32;

  [[nodiscard]] double wavenumber() const;
  /// Throws SamplingError unless wavelength*|z| <= N*pitch^2 along both axes
  /// (the transfer-function kernel is then not aliased).
  void validate(double distance) const;
};

/// Squared modulus of sqrt(I0) exp(i phi) propagated by `distance` with the
/// Fresnel transfer function. Throws for distance == 0 or undersampling.
Image fresnel_propagate(const Image& amplitude, const Image& phase, double distance, const OpticalConfig& optics);
/// Complex-field version; |H| = 1 so the discrete energy is preserved.
Field fresnel_propagate_field(const Field& field, double distance, const OpticalConfig& optics);

/// (I_{-d} - I_d) / (2 d), as printed in the data model.
Image intensity_derivative(const Image& i_minus_d, const Image& i_d, double d);

/// Circular convolution with a normalized Gaussian; sigma <= 1e-6 is the identity.
Image gaussian_blur(const Image& img, double sigma);

}  // namespace cvdm
