#pragma once

// File formats: NPY arrays, a tensor archive for checkpoints, PNG previews
// and small SVG line plots.

#include "cvdm/tensor.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cvdm::io {

namespace fs = std::filesystem;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view bytes);
std::string file_digest(const fs::path& path);

/// float64 little-endian, C order. A {1,C,H,W} tensor is stored with shape (C,H,W).
void write_npy(const fs::path& path, const Tensor& t);
/// Accepts '<f8' or '<f4' arrays of rank 2 (H,W), 3 (C,H,W) or 4 (N,C,H,W).
Tensor read_npy(const fs::path& path);

/// Self-describing container: magic "CVDMCKPT", u64 header length, JSON header
/// (user metadata plus name/shape/offset per tensor), then raw float64 data.
struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  [[nodiscard]] const Tensor& get(const std::string& name) const;
};
void save_archive(const fs::path& path, const TensorArchive& archive);
TensorArchive load_archive(const fs::path& path);

/// 8-bit grayscale PNG of an HxW plane, mapping [lo, hi] to [0, 255].
void write_png(const fs::path& path, const Eigen::ArrayXXd& plane, double lo, double hi);
/// Channel `c` of sample `n` as an HxW array.
Eigen::ArrayXXd plane(const Tensor& t, int n = 0, int c = 0);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};
void write_svg_plot(const fs::path& path, const std::vector<PlotSeries>& series, const PlotOptions& options);

void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);
std::string read_text(const fs::path& path);

}  // namespace cvdm::io
