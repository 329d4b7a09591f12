#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace lpa {

// Squared-exponential kernel with per-dimension length scales. Observation
// noise is kept out of the kernel value; likelihood and predictive formulas
// add sigma_n^2 I where the model calls for it.
template <typename Scalar>
struct KernelConfigT {
  Scalar signal_sd = Scalar(1);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lengthscales;
  Scalar noise_sd = Scalar(0);
  Scalar jitter = Scalar(1e-8);
};

using KernelConfig = KernelConfigT<double>;

template <typename DerivedA, typename DerivedB, typename Scalar>
Scalar se_ard(const Eigen::MatrixBase<DerivedA>& zi, const Eigen::MatrixBase<DerivedB>& zj,
              const KernelConfigT<Scalar>& cfg) {
  if (zi.size() != zj.size() || zi.size() != cfg.lengthscales.size())
    throw std::invalid_argument("se_ard: dimension mismatch");
  const Scalar q =
      ((zi.derived() - zj.derived()).array() / cfg.lengthscales.array()).square().sum();
  return cfg.signal_sd * cfg.signal_sd * std::exp(Scalar(-0.5) * q);
}

// Rows of Z are points in pooling space.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gram(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Z,
    const KernelConfigT<Scalar>& cfg) {
  const auto n = Z.rows();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> G(n, n);
  const Scalar s2 = cfg.signal_sd * cfg.signal_sd;
  for (Eigen::Index i = 0; i < n; ++i) {
    G(i, i) = s2;
    for (Eigen::Index j = 0; j < i; ++j) {
      const Scalar q =
          ((Z.row(i) - Z.row(j)).transpose().array() / cfg.lengthscales.array()).square().sum();
      G(i, j) = G(j, i) = s2 * std::exp(Scalar(-0.5) * q);
    }
  }
  return G;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cross_gram(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Za,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Zb,
    const KernelConfigT<Scalar>& cfg) {
  if (Za.cols() != Zb.cols()) throw std::invalid_argument("cross_gram: dimension mismatch");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> G(Za.rows(), Zb.rows());
  const Scalar s2 = cfg.signal_sd * cfg.signal_sd;
  for (Eigen::Index i = 0; i < Za.rows(); ++i)
    for (Eigen::Index j = 0; j < Zb.rows(); ++j) {
      const Scalar q =
          ((Za.row(i) - Zb.row(j)).transpose().array() / cfg.lengthscales.array()).square().sum();
      G(i, j) = s2 * std::exp(Scalar(-0.5) * q);
    }
  return G;
}

// Cholesky of A + jitter I, escalating the jitter 1e-8 -> 1e-6 -> 1e-4
// before giving up. Duplicated pooling points make the bare Gram singular.
template <typename Scalar>
Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> cholesky_with_jitter(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A, Scalar jitter = Scalar(1e-8),
    Scalar max_jitter = Scalar(1e-4)) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Scalar j = jitter;
  while (true) {
    Mat B = A;
    B.diagonal().array() += j;
    Eigen::LLT<Mat> llt(B);
    if (llt.info() == Eigen::Success) return llt;
    if (j >= max_jitter)
      throw std::runtime_error(
          "cholesky_with_jitter: matrix not positive definite at jitter 1e-4; "
          "inputs are too poorly conditioned");
    j *= Scalar(100);
    if (j > max_jitter) j = max_jitter;
  }
}

}  // namespace lpa
