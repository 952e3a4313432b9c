#pragma once

#include "cvdm/io.hpp"
#include "cvdm/optics.hpp"
#include "cvdm/rng.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cvdm {

struct PairedSample {
  Tensor x;  ///< {1,Cx,H,W}
  Tensor y;  ///< {1,Cy,H,W}
  double xi = 0.0;
  std::string source;
};

enum class ConditionLayout { kStack, kDerivative };

struct PairOptions {
  ConditionLayout layout = ConditionLayout::kStack;
  double phase_scale = 3.14159265358979323846;  ///< phi = phase_scale * source
  double xi_max = 0.2;
  std::optional<double> xi;  ///< force a noise level instead of drawing U[0, xi_max]
};

/// Pure-phase object with I0 = 1: y = source, x = (I_d, I_{-d}) or their
/// derivative map, each intensity with N(xi, xi) noise added independently.
PairedSample make_pair(const Image& source, const OpticalConfig& optics, Rng& noise_rng, const PairOptions& options = {});

/// x = blur(y) + N(0, noise_sigma^2), one channel each.
PairedSample make_toy_blur_pair(const Image& source, double kernel_sigma, double noise_sigma, Rng& noise_rng);

/// Smooth random image in [0, 1]: a sum of Gaussian blobs, min-max normalized.
Image procedural_source(int height, int width, Rng& rng, int blobs = 6);

/// Grayscale PGM (P2/P5) or PNG images from a directory, sorted by name,
/// center-cropped to square and box-resampled to height x width, scaled to [0, 1].
std::vector<std::pair<std::string, Image>> load_source_directory(const std::filesystem::path& dir, int height,
                                                                 int width);

struct DatasetConfig {
  std::string kind = "qpi";  ///< "qpi" or "blur"
  int n_train = 64;
  int n_val = 16;
  int size = 32;
  std::uint64_t seed = 0;
  OpticalConfig optics;
  PairOptions pair;
  double blur_sigma = 1.5;
  double blur_noise = 0.02;
  std::string source_dir;  ///< empty: procedural sources
  int blobs = 6;
};

struct Dataset {
  std::vector<PairedSample> samples;

  [[nodiscard]] int size() const { return static_cast<int>(samples.size()); }
  /// Stack of the requested samples as {B,C,H,W} tensors.
  [[nodiscard]] std::pair<Tensor, Tensor> batch(const std::vector<int>& indices) const;
  [[nodiscard]] std::pair<Tensor, Tensor> all() const;
};

/// Deterministic in (config); split "train" uses indices [0, n_train), "val" the next n_val.
Dataset generate_split(const DatasetConfig& config, const std::string& split);

/// Writes <dir>/<split>/{x,y}_NNNN.npy and <dir>/manifest.json.
void write_dataset(const std::filesystem::path& dir, const DatasetConfig& config);
Dataset load_split(const std::filesystem::path& dir, const std::string& split);

}  // namespace cvdm
