#pragma once

// Independent metric oracles and test images shared by the unit and acceptance suites.

#include "cvdm/metrics.hpp"
#include "cvdm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace cvdm::test_support {

using metrics::Plane;

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const Plane& p) {
  Grid g(static_cast<std::size_t>(p.rows()), std::vector<double>(static_cast<std::size_t>(p.cols())));
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    for (Eigen::Index c = 0; c < p.cols(); ++c) g[r][c] = p(r, c);
  return g;
}

/// Direct-definition MS-SSIM with plain loops: 2D window sums, no separable filtering.
inline double reference_ms_ssim(Grid a, Grid b, int scales) {
  double w[11][11], total = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  for (auto& row : w)
    for (double& v : row) v /= total;
  const double c1 = 1e-4, c2 = 9e-4;
  double result = 1;
  for (int s = 1; s <= scales; ++s) {
    const std::size_t rows = a.size(), cols = a[0].size();
    double l_sum = 0, cs_sum = 0;
    int count = 0;
    for (std::size_t r = 0; r + 11 <= rows; ++r) {
      for (std::size_t c = 0; c + 11 <= cols; ++c) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double x = a[r + i][c + j], y = b[r + i][c + j];
            ma += w[i][j] * x;
            mb += w[i][j] * y;
            saa += w[i][j] * x * x;
            sbb += w[i][j] * y * y;
            sab += w[i][j] * x * y;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        l_sum += (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs_sum += (2 * cov + c2) / (va + vb + c2);
        ++count;
      }
    }
    result *= std::pow(std::max(cs_sum / count, 0.0), 1.0 / scales);
    if (s == scales) {
      result *= std::pow(l_sum / count, 1.0 / scales);
    } else {
      Grid da(rows / 2, std::vector<double>(cols / 2)), db = da;
      for (std::size_t r = 0; r < rows / 2; ++r) {
        for (std::size_t c = 0; c < cols / 2; ++c) {
          da[r][c] = (a[2 * r][2 * c] + a[2 * r + 1][2 * c] + a[2 * r][2 * c + 1] + a[2 * r + 1][2 * c + 1]) / 4;
          db[r][c] = (b[2 * r][2 * c] + b[2 * r + 1][2 * c] + b[2 * r][2 * c + 1] + b[2 * r + 1][2 * c + 1]) / 4;
        }
      }
      a = std::move(da);
      b = std::move(db);
    }
  }
  return result;
}

inline Plane smooth_image(int n, Rng& rng) {
  Plane p(n, n);
  const double fx = rng.uniform(0.02, 0.1), fy = rng.uniform(0.02, 0.1), ph = rng.uniform(0, 6);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) p(r, c) = 0.5 + 0.4 * std::sin(fx * c + ph) * std::cos(fy * r);
  return p;
}

inline Plane noisy(const Plane& p, double sd, Rng& rng) {
  Plane q = p;
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] += rng.normal(0, sd);
  return q;
}

}  // namespace cvdm::test_support
