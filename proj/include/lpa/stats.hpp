#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace lpa {

inline double log_sum_exp(double a, double b) {
  if (std::isinf(a) && a < 0) return b;
  if (std::isinf(b) && b < 0) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

template <typename Derived>
double log_sum_exp(const Eigen::MatrixBase<Derived>& x) {
  const double m = x.maxCoeff();
  if (std::isinf(m) && m < 0) return m;
  return m + std::log((x.array() - m).exp().sum());
}

inline double normal_logpdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double normal_pdf(double x, double mu = 0.0, double sd = 1.0) {
  return std::exp(normal_logpdf(x, mu, sd));
}

inline double normal_cdf(double x, double mu = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mu) / (sd * std::numbers::sqrt2));
}

// log(cosh(z)) without overflow for large |z|.
inline double log_cosh(double z) {
  const double a = std::abs(z);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

inline double sample_mean(const Eigen::VectorXd& x) { return x.mean(); }

inline double sample_variance(const Eigen::VectorXd& x) {
  if (x.size() < 2) return 0.0;
  const double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

// Empirical quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * x[lo] + w * x[hi];
}

inline double quantile(const Eigen::VectorXd& x, double q) {
  return quantile(std::vector<double>(x.data(), x.data() + x.size()), q);
}

inline double median(const Eigen::VectorXd& x) { return quantile(x, 0.5); }

// Narrowest interval containing a `mass` fraction of the draws.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

inline Interval hpd_interval(std::vector<double> x, double mass = 0.95) {
  if (x.size() < 2) throw std::invalid_argument("hpd_interval: need at least 2 draws");
  std::sort(x.begin(), x.end());
  const auto n = x.size();
  auto k = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n)));
  k = std::min(std::max<std::size_t>(k, 2), n);
  std::size_t best = 0;
  double width = x[k - 1] - x[0];
  for (std::size_t i = 1; i + k <= n; ++i) {
    const double w = x[i + k - 1] - x[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {x[best], x[best + k - 1]};
}

inline Interval hpd_interval(const Eigen::VectorXd& x, double mass = 0.95) {
  return hpd_interval(std::vector<double>(x.data(), x.data() + x.size()), mass);
}

// One-sample Kolmogorov-Smirnov statistic against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> sample, Cdf&& cdf) {
  if (sample.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - f));
    d = std::max(d, std::abs(static_cast<double>(i) / n - f));
  }
  return d;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_statistic_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// Gaussian kernel density estimate with Silverman's bandwidth, evaluated in
// log space at a single point.
inline double kde_log_density(const Eigen::VectorXd& draws, double at) {
  const auto m = draws.size();
  if (m < 2) throw std::invalid_argument("kde_log_density: need at least 2 draws");
  const double sd = std::sqrt(sample_variance(draws));
  const double iqr = quantile(draws, 0.75) - quantile(draws, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
  if (spread <= 0.0) spread = std::max(sd, 1e-12);
  const double h = 0.9 * spread * std::pow(static_cast<double>(m), -0.2);
  Eigen::ArrayXd z = (draws.array() - at) / h;
  Eigen::ArrayXd logs = -0.5 * z.square() - std::log(h) - 0.5 * std::log(2.0 * std::numbers::pi);
  return log_sum_exp(logs.matrix()) - std::log(static_cast<double>(m));
}

}  // namespace lpa
