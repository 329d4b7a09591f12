#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lpa/stats.hpp"

namespace lpa::ncx2 {

// Scaled noncentral chi-squared with one degree of freedom: X = b (W + sqrt(lambda))^2
// with W standard normal. This is the distribution of the shifted, negated
// log score of a Gaussian predictive density under a Gaussian data process.
struct Params {
  double lambda = 0.0;  // noncentrality, >= 0
  double b = 1.0;       // scale, > 0
};

inline void validate(const Params& p) {
  if (!(p.lambda >= 0.0) || !std::isfinite(p.lambda))
    throw std::invalid_argument("ncx2: lambda must be nonnegative and finite");
  if (!(p.b > 0.0) || !std::isfinite(p.b))
    throw std::invalid_argument("ncx2: b must be positive and finite");
}

// Density of chi2_1(lambda) at u in closed form,
//   f(u) = exp(-(u + lambda)/2) cosh(sqrt(lambda u)) / sqrt(2 pi u),
// evaluated in log space; the scale enters as (1/b) f(x/b).
inline double logpdf(double x, const Params& p) {
  validate(p);
  if (!(x > 0.0)) throw std::invalid_argument("ncx2::logpdf: x must be positive");
  const double u = x / p.b;
  const double s = std::sqrt(p.lambda * u);
  return -std::log(p.b) - 0.5 * (u + p.lambda) + log_cosh(s) -
         0.5 * std::log(2.0 * std::numbers::pi * u);
}

inline double mean(const Params& p) {
  validate(p);
  return p.b * (1.0 + p.lambda);
}

inline double variance(const Params& p) {
  validate(p);
  return p.b * p.b * 2.0 * (1.0 + 2.0 * p.lambda);
}

// CDF via the Gaussian representation:
// P(X <= x) = Phi(sqrt(x/b) - sqrt(lambda)) - Phi(-sqrt(x/b) - sqrt(lambda)).
inline double cdf(double x, const Params& p) {
  validate(p);
  if (x <= 0.0) return 0.0;
  const double r = std::sqrt(x / p.b);
  const double sl = std::sqrt(p.lambda);
  return normal_cdf(r - sl) - normal_cdf(-r - sl);
}

// d logpdf / d log(lambda) at fixed x, used by the latent-field gradient.
// With s = sqrt(lambda x / b): (s tanh(s) - lambda) / 2.
inline double dlogpdf_dloglambda(double x, const Params& p) {
  const double u = x / p.b;
  const double s = std::sqrt(p.lambda * u);
  return 0.5 * (s * std::tanh(s) - p.lambda);
}

// d logpdf / d log(b) at fixed x: (u - 1 - s tanh(s)) / 2 with u = x/b.
inline double dlogpdf_dlogb(double x, const Params& p) {
  const double u = x / p.b;
  const double s = std::sqrt(p.lambda * u);
  return 0.5 * (u - 1.0 - s * std::tanh(s));
}

template <typename Rng>
double sample_one(const Params& p, Rng& rng) {
  const double w = rng.normal() + std::sqrt(p.lambda);
  return p.b * w * w;
}

template <typename Rng>
Eigen::VectorXd sample(const Params& p, Rng& rng, Eigen::Index n) {
  validate(p);
  if (n < 1) throw std::invalid_argument("ncx2::sample: n must be >= 1");
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = sample_one(p, rng);
  return out;
}

}  // namespace lpa::ncx2
