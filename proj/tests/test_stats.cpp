#include <doctest.h>

#include <cmath>
#include <vector>

#include "lpa/quadrature.hpp"
#include "lpa/rng.hpp"
#include "lpa/stats.hpp"

using namespace lpa;

TEST_CASE("log sum exp is overflow safe") {
  CHECK(log_sum_exp(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(log_sum_exp(1000.0, 1000.0) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp(ninf, 3.0) == 3.0);
  CHECK(log_sum_exp(3.0, ninf) == 3.0);

  Eigen::Vector3d v(-1.0, 0.0, 2.0);
  CHECK(log_sum_exp(v) ==
        doctest::Approx(std::log(std::exp(-1.0) + 1.0 + std::exp(2.0))).epsilon(1e-14));
}

TEST_CASE("normal distribution helpers") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021048517795).epsilon(1e-12));
  CHECK(normal_cdf(-1.0) == doctest::Approx(0.15865525393145707).epsilon(1e-12));
  CHECK(normal_logpdf(0.3, 0.1, 2.0) ==
        doctest::Approx(std::log(normal_pdf(0.3, 0.1, 2.0))).epsilon(1e-13));
  CHECK(normal_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-14));
}

TEST_CASE("log cosh stays finite and accurate") {
  CHECK(log_cosh(800.0) == doctest::Approx(800.0 - std::log(2.0)).epsilon(1e-15));
  CHECK(log_cosh(0.0) == 0.0);
  CHECK(log_cosh(0.01) == doctest::Approx(std::log(std::cosh(0.01))).epsilon(1e-12));
  CHECK(log_cosh(-3.0) == doctest::Approx(std::log(std::cosh(3.0))).epsilon(1e-13));
}

TEST_CASE("quantiles interpolate order statistics") {
  std::vector<double> x{4.0, 1.0, 3.0, 2.0};
  CHECK(quantile(x, 0.0) == 1.0);
  CHECK(quantile(x, 1.0) == 4.0);
  CHECK(quantile(x, 0.5) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(quantile(x, 0.25) == doctest::Approx(1.75).epsilon(1e-15));
  Eigen::VectorXd v(5);
  v << 5, 1, 2, 4, 3;
  CHECK(median(v) == 3.0);
}

TEST_CASE("hpd interval hugs the mode of a skewed sample") {
  RngStream rng(11);
  const int n = 20000;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    x[i] = std::exp(z);  // lognormal, mode well below the mean
  }
  const Interval hpd = hpd_interval(x, 0.9);
  const double central_lo = quantile(x, 0.05), central_hi = quantile(x, 0.95);
  CHECK(hpd.hi - hpd.lo < central_hi - central_lo);
  CHECK(hpd.lo < 1.0);  // contains the mode exp(-1) ~ 0.37
  CHECK(hpd.hi > 1.0);
}

TEST_CASE("ks statistics") {
  const int n = 5000;
  RngStream rng(17);
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) u[i] = rng.uniform();
  const double d = ks_statistic(u, [](double x) { return std::min(std::max(x, 0.0), 1.0); });
  CHECK(d < 0.03);

  std::vector<double> shifted(u);
  for (double& v : shifted) v = std::min(1.0, v + 0.2);
  CHECK(ks_statistic_two_sample(u, shifted) > 0.15);
}

TEST_CASE("kde log density approximates a known density") {
  RngStream rng(23);
  Eigen::VectorXd draws(40000);
  for (Eigen::Index i = 0; i < draws.size(); ++i) draws[i] = rng.normal();
  CHECK(kde_log_density(draws, 0.0) ==
        doctest::Approx(std::log(normal_pdf(0.0))).epsilon(0.02));
  CHECK(kde_log_density(draws, 1.5) ==
        doctest::Approx(std::log(normal_pdf(1.5))).epsilon(0.05));
}

TEST_CASE("sample variance uses the unbiased denominator") {
  Eigen::VectorXd x(4);
  x << 1, 2, 3, 4;
  CHECK(sample_variance(x) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("adaptive quadrature") {
  CHECK(integrate([](double x) { return std::sin(x); }, 0.0, M_PI) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(integrate([](double x) { return normal_pdf(x); }, -8.0, 8.0) ==
        doctest::Approx(1.0).epsilon(1e-10));
  // narrow spike demands subdivision
  CHECK(integrate([](double x) { return normal_pdf(x, 0.5, 1e-3); }, 0.0, 1.0, 1e-10) ==
        doctest::Approx(1.0).epsilon(1e-8));
  // refuses to report garbage when the budget is too small: the integrable
  // singularity keeps the error estimate large however the cells are split
  CHECK_THROWS(integrate([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0, 1e-12, 3));
}
