#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "lpa/kernel.hpp"
#include "lpa/rng.hpp"

using namespace lpa;

namespace {
KernelConfig make_cfg(double signal_sd, std::initializer_list<double> ls) {
  KernelConfig cfg;
  cfg.signal_sd = signal_sd;
  cfg.lengthscales.resize(static_cast<Eigen::Index>(ls.size()));
  Eigen::Index i = 0;
  for (double v : ls) cfg.lengthscales[i++] = v;
  return cfg;
}
}  // namespace

TEST_CASE("kernel value and basic properties") {
  const KernelConfig cfg = make_cfg(1.3, {0.7, 2.0});
  Eigen::Vector2d zi(0.1, -0.4), zj(0.6, 0.6);
  const double q = std::pow(0.5 / 0.7, 2) + std::pow(1.0 / 2.0, 2);
  CHECK(se_ard(zi, zj, cfg) == doctest::Approx(1.69 * std::exp(-0.5 * q)).epsilon(1e-14));
  CHECK(se_ard(zi, zi, cfg) == doctest::Approx(1.69).epsilon(1e-15));
  CHECK(se_ard(zi, zj, cfg) == doctest::Approx(se_ard(zj, zi, cfg)).epsilon(1e-15));

  // longer lengthscale raises correlation
  const KernelConfig wide = make_cfg(1.3, {7.0, 20.0});
  CHECK(se_ard(zi, zj, wide) > se_ard(zi, zj, cfg));

  Eigen::Vector3d bad(0, 0, 0);
  CHECK_THROWS(se_ard(bad, bad, cfg));
}

TEST_CASE("gram agrees with pairwise kernel and is positive semidefinite") {
  RngStream rng(5);
  Eigen::MatrixXd z(9, 2);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i / 2, i % 2) = rng.normal();
  const KernelConfig cfg = make_cfg(0.9, {1.1, 0.6});

  const Eigen::MatrixXd g = gram(z, cfg);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.rows(); ++j)
      CHECK(g(i, j) ==
            doctest::Approx(se_ard(z.row(i).transpose(), z.row(j).transpose(), cfg)).epsilon(1e-14));

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("cross gram is consistent with gram") {
  RngStream rng(6);
  Eigen::MatrixXd z(5, 1);
  for (Eigen::Index i = 0; i < 5; ++i) z(i, 0) = rng.normal();
  const KernelConfig cfg = make_cfg(1.0, {0.8});
  const Eigen::MatrixXd c = cross_gram(z, z, cfg);
  const Eigen::MatrixXd g = gram(z, cfg);
  CHECK((c - g).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("cholesky jitter ladder") {
  const KernelConfig cfg = make_cfg(1.0, {1.0});
  Eigen::MatrixXd z(4, 1);
  z << 0.0, 0.5, 1.2, 2.0;
  const Eigen::MatrixXd g = gram(z, cfg);

  auto llt = cholesky_with_jitter(g);
  Eigen::MatrixXd expect = g;
  expect.diagonal().array() += 1e-8;
  const Eigen::MatrixXd l = llt.matrixL();
  CHECK((l * l.transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(l.diagonal().minCoeff() > 0.0);

  // duplicated points: singular without jitter, fine with it
  Eigen::MatrixXd zdup(3, 1);
  zdup << 0.7, 0.7, 1.4;
  CHECK_NOTHROW(cholesky_with_jitter(gram(zdup, cfg)));

  // genuinely indefinite input exhausts the ladder
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(1, 1) = -1.0;
  CHECK_THROWS(cholesky_with_jitter(bad));
}
