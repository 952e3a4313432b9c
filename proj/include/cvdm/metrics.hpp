#pragma once

#include "cvdm/tensor.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cvdm::metrics {

using Plane = Eigen::ArrayXXd;

struct MetricsConfig {
  double peak = 1.0;  ///< data range for PSNR and the SSIM constants
  int ms_ssim_scales = 5;
};

double mae(const Plane& y, const Plane& y_hat);
/// +infinity when the images are identical.
double psnr(const Plane& y, const Plane& y_hat, double peak = 1.0);
/// Mean SSIM map, 11x11 Gaussian window (sigma 1.5), valid region only.
double ssim(const Plane& y, const Plane& y_hat, double peak = 1.0);
/// Equal weights 1/M on every factor; 2x2 average pooling between scales.
/// M drops (with a warning on stderr) until the coarsest scale fits the window;
/// throws if even M = 1 does not fit. `scales_used` receives the effective M.
double ms_ssim(const Plane& y, const Plane& y_hat, double peak = 1.0, int scales = 5, int* scales_used = nullptr);

/// Tensor forms average over every (sample, channel) plane.
double mae(const Tensor& y, const Tensor& y_hat);
double psnr(const Tensor& y, const Tensor& y_hat, double peak = 1.0);
double ssim(const Tensor& y, const Tensor& y_hat, double peak = 1.0);
double ms_ssim(const Tensor& y, const Tensor& y_hat, double peak = 1.0, int scales = 5);

struct SampleMetrics {
  double mae = 0, ms_ssim = 0, ssim = 0, psnr = 0;
};

struct PairedStats {
  int n = 0;
  double mean_difference = 0;
  double sd_difference = 0;
  double t_statistic = 0;  ///< mean / (sd / sqrt(n)); +-inf when sd = 0 and mean != 0
};

/// Paired t statistic of a - b.
PairedStats paired_t(const std::vector<double>& a, const std::vector<double>& b);

/// Spearman rank correlation; tied values share their average rank.
double spearman(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b);

struct MetricReport {
  std::vector<std::string> ids;
  std::vector<SampleMetrics> samples;
  SampleMetrics aggregate;
  int scales_used = 0;

  [[nodiscard]] int count() const { return static_cast<int>(samples.size()); }
  [[nodiscard]] std::vector<double> column(const std::string& metric) const;
  [[nodiscard]] nlohmann::json to_json() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Pairs ground truth with predictions sample by sample ({1,C,H,W} each).
MetricReport evaluate(const std::vector<Tensor>& truth, const std::vector<Tensor>& predicted,
                      const std::vector<std::string>& ids, const MetricsConfig& config = {});

}  // namespace cvdm::metrics
