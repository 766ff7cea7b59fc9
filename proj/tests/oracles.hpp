#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline double normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2 * std::numbers::pi * var);
}

inline double normal_cdf(double x, double mean = 0, double sd = 1) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

// Composite Simpson on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 20000) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int j = 1; j < panels; ++j) acc += f(a + h * j) * (j % 2 ? 4 : 2);
  return acc * h / 3;
}

// sup |F_n - F| for a sample against a continuous cdf.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

// Kolmogorov tail P(sqrt(n) D > t), asymptotic series.
inline double kolmogorov_pvalue(double d, std::size_t n) {
  const double t = d * std::sqrt(static_cast<double>(n));
  if (t < 0.2) return 1.0;
  double p = 0;
  for (int k = 1; k <= 100; ++k) p += 2 * (k % 2 ? 1 : -1) * std::exp(-2.0 * k * k * t * t);
  return std::clamp(p, 0.0, 1.0);
}

// Sigma_n by the direct power sum: sigma^2 / n^2 sum_{m=1}^n W^{n-m+1} (W^{n-m+1})^T.
inline Eigen::MatrixXd direct_covariance(const Eigen::MatrixXd& w, double sigma, int n) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  Eigen::MatrixXd p = w;
  for (int m = n; m >= 1; --m) {
    acc += p * p.transpose();
    p = (p * w).eval();
  }
  return sigma * sigma / (double(n) * n) * acc;
}

}  // namespace oracle
