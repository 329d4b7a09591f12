#include <doctest.h>

#include <cmath>

#include "lpa/rng.hpp"
#include "lpa/transforms.hpp"

using namespace lpa;

TEST_CASE("offset is the attainable maximum of a gaussian log score") {
  // -0.5 log(4 pi) for predictive variance 2
  CHECK(offset_a(std::sqrt(2.0)) == doctest::Approx(-1.2655121234846454).epsilon(1e-14));
  CHECK(offset_a(1.0) == doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-14));
  CHECK_THROWS(offset_a(0.0));
  CHECK_THROWS(offset_a(-1.0));
}

TEST_CASE("shifted score roundtrip and clamping") {
  const double a = offset_a(2.0);
  CHECK(to_lprime(a - 0.7, a) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(to_lprime(a, a) == 0.0);
  CHECK(to_lprime(a + 1e-10, a) == 0.0);  // rounding-level violation clamps
  CHECK_THROWS(to_lprime(a + 1.0, a));    // real violation refuses

  const double l = -3.241;
  CHECK(from_lprime(to_lprime(l, a), a) == doctest::Approx(l).epsilon(1e-15));
}

TEST_CASE("power transform applies the configured exponent") {
  TransformSpec cube;
  CHECK(power_forward(8.0, cube) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(power_inverse(2.0, cube) == doctest::Approx(8.0).epsilon(1e-13));

  TransformSpec pow{TransformKind::power, 0.41};
  const double y = power_forward(3.7, pow);
  CHECK(y == doctest::Approx(std::pow(3.7, 0.41)).epsilon(1e-14));
  CHECK(power_inverse(y, pow) == doctest::Approx(3.7).epsilon(1e-12));
  CHECK_THROWS(power_forward(-0.1, cube));
}

TEST_CASE("cube latent maps to elpd through the third gaussian moment") {
  // degenerate: no noise, no latent spread
  CHECK(elpd_from_latent_cube(-1.1, 0.8, 0.0) == -1.1 - 0.8 * 0.8 * 0.8);

  // Monte Carlo oracle for E[(f + sigma W)^3]
  const double f = 0.9, sigma2 = 0.2, a = -1.3;
  RngStream rng(77);
  const long m = 400000;
  double acc = 0.0, acc2 = 0.0;
  for (long i = 0; i < m; ++i) {
    const double x = f + std::sqrt(sigma2) * rng.normal();
    const double x3 = x * x * x;
    acc += x3;
    acc2 += x3 * x3;
  }
  const double mc = acc / m;
  const double se = std::sqrt((acc2 / m - mc * mc) / m);
  const double eta = elpd_from_latent_cube(a, f, sigma2);
  CHECK(std::abs((a - mc) - eta) < 5.0 * se);
}

TEST_CASE("gaussian power moment matches closed forms") {
  // exponent 3 with negligible negative mass reduces to mu^3 + 3 mu sigma^2
  const double mu = 2.0, var = 0.09;
  const PowerMoment cube = gaussian_power_moment(mu, var, 3.0);
  CHECK(cube.value == doctest::Approx(mu * mu * mu + 3.0 * mu * var).epsilon(1e-8));
  CHECK(cube.neg_tail_mass < 1e-10);

  const PowerMoment first = gaussian_power_moment(mu, var, 1.0);
  CHECK(first.value == doctest::Approx(mu).epsilon(1e-8));

  // degenerate variance
  const PowerMoment point = gaussian_power_moment(1.7, 0.0, 2.5);
  CHECK(point.value == doctest::Approx(std::pow(1.7, 2.5)).epsilon(1e-15));
  CHECK(point.neg_tail_mass == 0.0);
  const PowerMoment neg = gaussian_power_moment(-0.4, 0.0, 2.5);
  CHECK(neg.value == 0.0);
  CHECK(neg.neg_tail_mass == 1.0);
}

TEST_CASE("power elpd at one third agrees with the cube identity") {
  const double a = -1.0, f = 1.5, sigma2 = 0.04;
  double tail = -1.0;
  const double via_power = elpd_from_latent_power(a, f, sigma2, 1.0 / 3.0, &tail);
  const double via_cube = elpd_from_latent_cube(a, f, sigma2);
  CHECK(tail < 1e-10);
  CHECK(via_power == doctest::Approx(via_cube).epsilon(1e-7));
}

TEST_CASE("power elpd reports the truncated mass") {
  double tail = 0.0;
  elpd_from_latent_power(0.0, 0.5, 1.0, 1.0 / 3.0, &tail);
  CHECK(tail == doctest::Approx(0.5 * std::erfc(0.5 / std::sqrt(2.0))).epsilon(1e-12));
}
