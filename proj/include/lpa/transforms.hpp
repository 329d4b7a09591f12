#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lpa/quadrature.hpp"
#include "lpa/stats.hpp"

namespace lpa {

// Transform chain between raw log scores, the shifted nonnegative scale, the
// power-transformed scale, and expected-log-density values.

enum class TransformKind { cube_root, power };

struct TransformSpec {
  TransformKind kind = TransformKind::cube_root;
  double power_alpha = 1.0 / 3.0;  // fixed to 1/3 for cube_root

  double alpha() const { return kind == TransformKind::cube_root ? 1.0 / 3.0 : power_alpha; }
};

inline constexpr double kLprimeClampTol = 1e-9;

// a = -1/2 log(2 pi sigma^2), the attainable maximum of a Gaussian log score.
template <typename Scalar>
Scalar offset_a(Scalar predictive_sd) {
  if (!(predictive_sd > Scalar(0)) || !std::isfinite(predictive_sd))
    throw std::invalid_argument("offset_a: predictive sd must be positive and finite");
  return Scalar(-0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar> * predictive_sd * predictive_sd);
}

// lprime = -(l - a) >= 0. Values slightly below zero from rounding are
// clamped; anything beyond the tolerance means the score is inconsistent
// with the reported predictive sd.
template <typename Scalar>
Scalar to_lprime(Scalar log_score, Scalar a) {
  const Scalar lp = -(log_score - a);
  if (lp < Scalar(0)) {
    if (lp < Scalar(-kLprimeClampTol))
      throw std::invalid_argument("to_lprime: log score exceeds its attainable maximum");
    return Scalar(0);
  }
  return lp;
}

template <typename Scalar>
Scalar from_lprime(Scalar lprime, Scalar a) {
  return a - lprime;
}

template <typename Scalar>
Scalar power_forward(Scalar lprime, const TransformSpec& spec) {
  if (lprime < Scalar(0)) throw std::invalid_argument("power_forward: negative input");
  return std::pow(lprime, Scalar(spec.alpha()));
}

template <typename Scalar>
Scalar power_inverse(Scalar y, const TransformSpec& spec) {
  if (y < Scalar(0)) throw std::invalid_argument("power_inverse: negative input");
  return std::pow(y, Scalar(1) / Scalar(spec.alpha()));
}

// ELPD from a latent cube-root-scale value: a - f^3 - 3 f sigma^2, using the
// third raw moment of a Gaussian, E(X^3) = mu^3 + 3 mu sigma^2.
template <typename Scalar>
Scalar elpd_from_latent_cube(Scalar a, Scalar f, Scalar sigma2) {
  if (!(sigma2 >= Scalar(0))) throw std::invalid_argument("elpd_from_latent_cube: negative variance");
  return a - f * f * f - Scalar(3) * f * sigma2;
}

struct PowerMoment {
  double value = 0.0;          // E[X^exponent 1{X >= 0}] for X ~ N(mean, var)
  double neg_tail_mass = 0.0;  // P(X < 0), the mass truncated at zero
};

// Fractional moment of a Gaussian restricted to the nonnegative axis,
// by adaptive quadrature over [0, mean + 12 sd].
inline PowerMoment gaussian_power_moment(double mean, double var, double exponent) {
  if (!(var >= 0.0)) throw std::invalid_argument("gaussian_power_moment: negative variance");
  PowerMoment out;
  if (var == 0.0) {
    out.value = mean >= 0.0 ? std::pow(mean, exponent) : 0.0;
    out.neg_tail_mass = mean < 0.0 ? 1.0 : 0.0;
    return out;
  }
  const double sd = std::sqrt(var);
  out.neg_tail_mass = normal_cdf(0.0, mean, sd);
  const double upper = mean + 12.0 * sd;
  if (upper <= 0.0) return out;  // essentially all mass below zero
  out.value = integrate(
      [&](double x) { return std::pow(x, exponent) * normal_pdf(x, mean, sd); }, 0.0, upper,
      1e-10);
  return out;
}

// ELPD under a general power transform: a - E[X^{1/alpha}] with
// X ~ N(f, sigma^2) truncated below at zero.
inline double elpd_from_latent_power(double a, double f, double sigma2, double alpha,
                                     double* neg_tail_mass = nullptr) {
  if (!(alpha > 0.0)) throw std::invalid_argument("elpd_from_latent_power: alpha must be positive");
  const PowerMoment m = gaussian_power_moment(f, sigma2, 1.0 / alpha);
  if (neg_tail_mass != nullptr) *neg_tail_mass = m.neg_tail_mass;
  return a - m.value;
}

}  // namespace lpa
