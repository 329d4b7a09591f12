#pragma once

#include <Eigen/Dense>

#include "lpa/dataset.hpp"
#include "lpa/draws.hpp"
#include "lpa/gp_cube.hpp"
#include "lpa/hmc.hpp"
#include "lpa/kernel.hpp"
#include "lpa/ncx2.hpp"
#include "lpa/rng.hpp"

namespace lpa {

// Exact model: shifted negated scores follow a scaled noncentral chi-squared
// with one degree of freedom whose log noncentrality is a latent GP over the
// pooling space. The latent vector is sampled jointly with the kernel
// hyperparameters and the scale b, using a whitened parameterization.
class ChisqModel {
 public:
  ChisqModel(ScoreDataset data, PriorConfig prior = {});

  const ScoreDataset& data() const { return data_; }
  double latent_mean() const { return latent_mean_; }

  // Unnormalized joint log posterior over the unconstrained vector
  // [v (whitened latent, n), log lengthscales (d), log signal_sd, log b].
  double joint_log_posterior(const Eigen::VectorXd& unconstrained,
                             Eigen::VectorXd* grad = nullptr) const;

  TargetDensity target() const;
  void fit(const HmcConfig& config);
  bool fitted() const { return fitted_; }
  const PosteriorDraws& draws() const;
  void set_draws(PosteriorDraws draws);

  // Per-draw reconstructed log noncentrality at the training points.
  Eigen::MatrixXd log_lambda_draws() const;

  // Per-draw conditional moments of log lambda at raw-scale query points.
  LatentPrediction latent_conditional_moments(const Eigen::MatrixXd& query_raw) const;

  // Per-draw lambda at query points, latent sampled from its conditional.
  Eigen::MatrixXd lambda_draws(const Eigen::MatrixXd& query_raw, RngStream& rng) const;

  // eta = a - b (1 + lambda) with lambda sampled as above.
  Eigen::MatrixXd elpd_draws(const Eigen::MatrixXd& query_raw, const Eigen::VectorXd& a_query,
                             RngStream& rng) const;

  void set_jitter(double jitter) { jitter_ = jitter; }
  double jitter() const { return jitter_; }

 private:
  struct Split {
    Eigen::VectorXd v;
    Eigen::VectorXd lengthscales;
    double signal_sd = 1.0;
    double b = 0.5;
  };
  Split split_row(const Eigen::VectorXd& row) const;

  ScoreDataset data_;
  PriorConfig prior_;
  double latent_mean_ = 0.0;  // constant GP mean for log lambda
  double jitter_ = 1e-8;
  PosteriorDraws draws_;
  bool fitted_ = false;
  Eigen::VectorXd lprime_safe_;
};

}  // namespace lpa
