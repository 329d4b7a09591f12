#include <doctest.h>

#include <cmath>

#include "lpa/hmc.hpp"
#include "lpa/stats.hpp"

using namespace lpa;

namespace {

TargetDensity gaussian2d() {
  // correlated Gaussian, rho = 0.9
  TargetDensity t;
  t.dim = 2;
  t.names = {"x", "y"};
  const double rho = 0.9;
  const double det = 1.0 - rho * rho;
  t.logp_grad = [rho, det](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    grad.resize(2);
    const double gx = (u[0] - rho * u[1]) / det;
    const double gy = (u[1] - rho * u[0]) / det;
    grad[0] = -gx;
    grad[1] = -gy;
    return -0.5 * (u[0] * gx + u[1] * gy);
  };
  return t;
}

}  // namespace

TEST_CASE("leapfrog conserves energy and reverses") {
  TargetDensity t;
  t.dim = 1;
  t.names = {"x"};
  t.logp_grad = [](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    grad.resize(1);
    grad[0] = -u[0];
    return -0.5 * u[0] * u[0];
  };

  Eigen::VectorXd q0(1), p0(1);
  q0 << 1.3;
  p0 << -0.4;
  const double h0 = 0.5 * p0.squaredNorm() + 0.5 * q0.squaredNorm();

  const LeapfrogResult fwd = leapfrog(q0, p0, 0.01, 500, t);
  REQUIRE(fwd.finite);
  const double h1 = 0.5 * fwd.momentum.squaredNorm() + 0.5 * fwd.position.squaredNorm();
  CHECK(std::abs(h1 - h0) < 1e-4);  // energy error O(step^2)

  // flip momentum and integrate back
  const LeapfrogResult back = leapfrog(fwd.position, -fwd.momentum, 0.01, 500, t);
  REQUIRE(back.finite);
  CHECK(back.position[0] == doctest::Approx(q0[0]).epsilon(1e-9));
  CHECK(back.momentum[0] == doctest::Approx(-p0[0]).epsilon(1e-9));

  // step scaling: quartering the step cuts energy error ~16x
  const LeapfrogResult coarse = leapfrog(q0, p0, 0.04, 125, t);
  const double hc = 0.5 * coarse.momentum.squaredNorm() + 0.5 * coarse.position.squaredNorm();
  CHECK(std::abs(h1 - h0) < std::abs(hc - h0));
}

TEST_CASE("samples a correlated gaussian correctly and deterministically") {
  HmcConfig cfg;
  cfg.warmup = 500;
  cfg.samples = 1500;
  cfg.chains = 2;
  cfg.max_leapfrog = 16;
  cfg.seed = 99;

  const PosteriorDraws d = hmc_sample(gaussian2d(), cfg);
  CHECK(d.draws.rows() == 3000);
  CHECK(d.columns.size() == 2);

  CHECK(std::abs(d.draws.col(0).mean()) < 0.1);
  CHECK(std::abs(d.draws.col(1).mean()) < 0.1);
  CHECK(sample_variance(d.draws.col(0)) == doctest::Approx(1.0).epsilon(0.15));
  const double cov = ((d.draws.col(0).array() - d.draws.col(0).mean()) *
                      (d.draws.col(1).array() - d.draws.col(1).mean()))
                         .sum() /
                     (d.draws.rows() - 1.0);
  CHECK(cov == doctest::Approx(0.9).epsilon(0.2));

  const ChainDiagnostics diag = diagnose(d);
  CHECK(diag.max_rhat < 1.05);
  CHECK(diag.min_ess > 200.0);
  CHECK(diag.divergence_fraction < 0.01);

  for (double ar : d.accept_rate) CHECK(ar == doctest::Approx(0.8).epsilon(0.2));
  for (double ss : d.step_size) CHECK(ss > 0.0);

  // bitwise determinism across runs and thread counts
  const PosteriorDraws again = hmc_sample(gaussian2d(), cfg);
  CHECK((again.draws - d.draws).cwiseAbs().maxCoeff() == 0.0);
  HmcConfig threaded = cfg;
  threaded.threads = 2;
  const PosteriorDraws par = hmc_sample(gaussian2d(), threaded);
  CHECK((par.draws - d.draws).cwiseAbs().maxCoeff() == 0.0);

  HmcConfig other = cfg;
  other.seed = 100;
  const PosteriorDraws different = hmc_sample(gaussian2d(), other);
  CHECK((different.draws - d.draws).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("mass adaptation handles widely different scales") {
  TargetDensity t;
  t.dim = 2;
  t.names = {"narrow", "wide"};
  t.logp_grad = [](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    grad.resize(2);
    grad[0] = -u[0];
    grad[1] = -u[1] / 2500.0;
    return -0.5 * u[0] * u[0] - 0.5 * u[1] * u[1] / 2500.0;
  };

  HmcConfig cfg;
  cfg.warmup = 800;
  cfg.samples = 1200;
  cfg.chains = 2;
  cfg.max_leapfrog = 32;
  cfg.seed = 7;
  const PosteriorDraws d = hmc_sample(t, cfg);

  CHECK(std::sqrt(sample_variance(d.draws.col(0))) == doctest::Approx(1.0).epsilon(0.25));
  CHECK(std::sqrt(sample_variance(d.draws.col(1))) == doctest::Approx(50.0).epsilon(0.25));
  CHECK(diagnose(d).max_rhat < 1.05);
}

TEST_CASE("divergences are counted when trajectories blow up") {
  // hard wall: density vanishes on one side
  TargetDensity t;
  t.dim = 1;
  t.names = {"x"};
  t.logp_grad = [](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    grad.resize(1);
    if (u[0] > 2.0) {
      grad[0] = 0.0;
      return -std::numeric_limits<double>::infinity();
    }
    grad[0] = -u[0];
    return -0.5 * u[0] * u[0];
  };
  t.initial = [](RngStream&) { return Eigen::VectorXd::Zero(1); };

  HmcConfig cfg;
  cfg.warmup = 200;
  cfg.samples = 800;
  cfg.chains = 1;
  cfg.max_leapfrog = 32;
  cfg.seed = 3;
  cfg.gradient_check_points = 0;  // wall breaks finite differences by design
  const PosteriorDraws d = hmc_sample(t, cfg);
  CHECK(d.divergences > 0);
  CHECK(d.draws.col(0).maxCoeff() <= 2.0);
  // still samples the interior shape
  CHECK(d.draws.col(0).minCoeff() < -1.0);
}

TEST_CASE("finite difference check rejects a wrong gradient") {
  TargetDensity t;
  t.dim = 1;
  t.names = {"x"};
  t.logp_grad = [](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    grad.resize(1);
    grad[0] = -1.02 * u[0];  // 2% off
    return -0.5 * u[0] * u[0];
  };
  t.initial = [](RngStream&) { return Eigen::VectorXd::Constant(1, 1.0); };
  const Eigen::VectorXd at = Eigen::VectorXd::Constant(1, 1.0);
  CHECK(gradient_check(t, at) > 1e-3);

  HmcConfig cfg;
  cfg.warmup = 10;
  cfg.samples = 10;
  cfg.chains = 1;
  cfg.seed = 1;
  CHECK_THROWS_AS(static_cast<void>(hmc_sample(t, cfg)), std::runtime_error);

  TargetDensity good = gaussian2d();
  Eigen::Vector2d p(0.3, -0.8);
  CHECK(gradient_check(good, p) < 1e-8);
}

TEST_CASE("configuration validation") {
  TargetDensity t = gaussian2d();
  HmcConfig cfg;
  cfg.samples = 0;
  CHECK_THROWS(static_cast<void>(hmc_sample(t, cfg)));
  cfg = HmcConfig{};
  cfg.target_accept = 1.5;
  CHECK_THROWS(static_cast<void>(hmc_sample(t, cfg)));
  TargetDensity empty;
  CHECK_THROWS(static_cast<void>(hmc_sample(empty, HmcConfig{})));
}
