#include "cvdm/metrics.hpp"

#include "cvdm/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>

namespace cvdm::metrics {
namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

Eigen::ArrayXd gaussian_taps() {
  Eigen::ArrayXd k(kWindow);
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - (kWindow - 1) / 2.0;
    k(i) = std::exp(-0.5 * d * d / (kWindowSigma * kWindowSigma));
  }
  return k / k.sum();
}

/// Separable valid-mode filtering with the normalized Gaussian window.
Plane filter_valid(const Plane& img) {
  static const Eigen::ArrayXd k = gaussian_taps();
  const Eigen::Index rows = img.rows() - kWindow + 1, cols = img.cols() - kWindow + 1;
  Plane tmp = Plane::Zero(img.rows(), cols);
  for (int i = 0; i < kWindow; ++i) tmp += k(i) * img.middleCols(i, cols);
  Plane out = Plane::Zero(rows, cols);
  for (int i = 0; i < kWindow; ++i) out += k(i) * tmp.middleRows(i, rows);
  return out;
}

struct SsimParts {
  double luminance;
  double contrast_structure;
  double ssim;
};

SsimParts ssim_parts(const Plane& a, const Plane& b, double peak) {
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  const Plane mu_a = filter_valid(a), mu_b = filter_valid(b);
  const Plane var_a = filter_valid(a * a) - mu_a.square();
  const Plane var_b = filter_valid(b * b) - mu_b.square();
  const Plane cov = filter_valid(a * b) - mu_a * mu_b;
  const Plane l = (2 * mu_a * mu_b + c1) / (mu_a.square() + mu_b.square() + c1);
  const Plane cs = (2 * cov + c2) / (var_a + var_b + c2);
  return {l.mean(), cs.mean(), (l * cs).mean()};
}

Plane pool2(const Plane& img) {
  const Eigen::Index rows = img.rows() / 2, cols = img.cols() / 2;
  Plane out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = img.block(2 * r, 2 * c, 2, 2).mean();
  return out;
}

void check_shapes(const Plane& y, const Plane& y_hat) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) throw std::invalid_argument("metric: shape mismatch");
}

void check_shapes(const Tensor& y, const Tensor& y_hat) {
  if (y.shape() != y_hat.shape()) {
    throw std::invalid_argument("metric: shape mismatch " + y.shape().str() + " vs " + y_hat.shape().str());
  }
}

template <typename F>
double plane_mean(const Tensor& y, const Tensor& y_hat, F f) {
  check_shapes(y, y_hat);
  double sum = 0;
  for (int n = 0; n < y.shape().n; ++n)
    for (int c = 0; c < y.shape().c; ++c) sum += f(io::plane(y, n, c), io::plane(y_hat, n, c));
  return sum / (y.shape().n * y.shape().c);
}

nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

nlohmann::json to_json(const SampleMetrics& m) {
  return {{"mae", number(m.mae)}, {"ms_ssim", number(m.ms_ssim)}, {"ssim", number(m.ssim)}, {"psnr", number(m.psnr)}};
}

}  // namespace

double mae(const Plane& y, const Plane& y_hat) {
  check_shapes(y, y_hat);
  return (y - y_hat).abs().mean();
}

double psnr(const Plane& y, const Plane& y_hat, double peak) {
  check_shapes(y, y_hat);
  if (!(peak > 0)) throw std::invalid_argument("psnr: peak must be > 0");
  const double mse = (y - y_hat).square().mean();
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Plane& y, const Plane& y_hat, double peak) {
  check_shapes(y, y_hat);
  if (y.rows() < kWindow || y.cols() < kWindow) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  return ssim_parts(y, y_hat, peak).ssim;
}

double ms_ssim(const Plane& y, const Plane& y_hat, double peak, int scales, int* scales_used) {
  check_shapes(y, y_hat);
  if (scales < 1) throw std::invalid_argument("ms_ssim: scales must be >= 1");
  const Eigen::Index side = std::min(y.rows(), y.cols());
  int m = scales;
  while (m >= 1 && (side >> (m - 1)) < kWindow) --m;
  if (m < 1) throw std::invalid_argument("ms_ssim: image smaller than the 11x11 window");
  static bool warned = false;
  if (m < scales && !warned) {
    warned = true;
    std::cerr << "warning: ms_ssim: " << y.rows() << "x" << y.cols() << " image supports " << m << " of " << scales
              << " scales\n";
  }
  if (scales_used != nullptr) *scales_used = m;
  const double w = 1.0 / m;
  Plane a = y, b = y_hat;
  double result = 1.0;
  for (int j = 1; j <= m; ++j) {
    const SsimParts p = ssim_parts(a, b, peak);
    result *= std::pow(std::max(p.contrast_structure, 0.0), w);
    if (j == m) {
      result *= std::pow(std::max(p.luminance, 0.0), w);
    } else {
      a = pool2(a);
      b = pool2(b);
    }
  }
  return result;
}

double mae(const Tensor& y, const Tensor& y_hat) {
  return plane_mean(y, y_hat, [](const Plane& a, const Plane& b) { return mae(a, b); });
}
double psnr(const Tensor& y, const Tensor& y_hat, double peak) {
  return plane_mean(y, y_hat, [peak](const Plane& a, const Plane& b) { return psnr(a, b, peak); });
}
double ssim(const Tensor& y, const Tensor& y_hat, double peak) {
  return plane_mean(y, y_hat, [peak](const Plane& a, const Plane& b) { return ssim(a, b, peak); });
}
double ms_ssim(const Tensor& y, const Tensor& y_hat, double peak, int scales) {
  return plane_mean(y, y_hat, [&](const Plane& a, const Plane& b) { return ms_ssim(a, b, peak, scales); });
}

PairedStats paired_t(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired_t needs two equal-length series, n >= 2");
  PairedStats s;
  s.n = static_cast<int>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) s.mean_difference += a[i] - b[i];
  s.mean_difference /= s.n;
  double ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += std::pow(a[i] - b[i] - s.mean_difference, 2);
  s.sd_difference = std::sqrt(ss / (s.n - 1));
  if (s.sd_difference > 0) {
    s.t_statistic = s.mean_difference / (s.sd_difference / std::sqrt(s.n));
  } else if (s.mean_difference != 0) {
    s.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), s.mean_difference);
  }
  return s;
}

namespace {

Eigen::ArrayXd ranks(const Eigen::ArrayXd& v) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return v(i) < v(j); });
  Eigen::ArrayXd r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v(order[j + 1]) == v(order[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r(order[k]) = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman needs two equal-length series, n >= 2");
  Eigen::ArrayXd ra = ranks(a), rb = ranks(b);
  ra -= ra.mean();
  rb -= rb.mean();
  const double den = std::sqrt((ra * ra).sum() * (rb * rb).sum());
  return den > 0 ? (ra * rb).sum() / den : 0.0;
}

std::vector<double> MetricReport::column(const std::string& metric) const {
  std::vector<double> out;
  for (const SampleMetrics& m : samples) {
    if (metric == "mae") out.push_back(m.mae);
    else if (metric == "ms_ssim") out.push_back(m.ms_ssim);
    else if (metric == "ssim") out.push_back(m.ssim);
    else if (metric == "psnr") out.push_back(m.psnr);
    else throw std::invalid_argument("unknown metric '" + metric + "'");
  }
  return out;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    nlohmann::json e = metrics::to_json(samples[i]);
    e["id"] = ids[i];
    per.push_back(e);
  }
  return {{"count", count()}, {"ms_ssim_scales", scales_used}, {"aggregate", metrics::to_json(aggregate)},
          {"samples", per}};
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17) << "id,mae,ms_ssim,ssim,psnr\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SampleMetrics& m = samples[i];
    out << ids[i] << ',' << m.mae << ',' << m.ms_ssim << ',' << m.ssim << ',' << m.psnr << '\n';
  }
  out << "mean," << aggregate.mae << ',' << aggregate.ms_ssim << ',' << aggregate.ssim << ',' << aggregate.psnr
      << '\n';
}

MetricReport evaluate(const std::vector<Tensor>& truth, const std::vector<Tensor>& predicted,
                      const std::vector<std::string>& ids, const MetricsConfig& config) {
  if (truth.size() != predicted.size() || truth.size() != ids.size() || truth.empty()) {
    throw std::invalid_argument("evaluate: truth, predictions and ids must be nonempty and equally long");
  }
  MetricReport r;
  r.ids = ids;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Tensor& y = truth[i];
    const Tensor& p = predicted[i];
    check_shapes(y, p);
    SampleMetrics m;
    m.mae = mae(y, p);
    m.psnr = psnr(y, p, config.peak);
    m.ssim = ssim(y, p, config.peak);
    m.ms_ssim = 0;
    for (int c = 0; c < y.shape().c; ++c) {
      for (int n = 0; n < y.shape().n; ++n) {
        m.ms_ssim += ms_ssim(io::plane(y, n, c), io::plane(p, n, c), config.peak, config.ms_ssim_scales,
                             i == 0 && c == 0 && n == 0 ? &r.scales_used : nullptr);
      }
    }
    m.ms_ssim /= y.shape().n * y.shape().c;
    r.samples.push_back(m);
  }
  const double n = static_cast<double>(r.samples.size());
  for (const SampleMetrics& m : r.samples) {
    r.aggregate.mae += m.mae / n;
    r.aggregate.ms_ssim += m.ms_ssim / n;
    r.aggregate.ssim += m.ssim / n;
    r.aggregate.psnr += m.psnr / n;
  }
  return r;
}

}  // namespace cvdm::metrics
