#pragma once

#include <Eigen/Dense>
#include <optional>

#include "lpa/dataset.hpp"
#include "lpa/draws.hpp"
#include "lpa/hmc.hpp"
#include "lpa/kernel.hpp"
#include "lpa/rng.hpp"
#include "lpa/transforms.hpp"

namespace lpa {

struct LatentPrediction {
  Eigen::MatrixXd mean;  // draws x query points
  Eigen::MatrixXd var;   // noise-free conditional variance, clamped at 0
};

// GP regression on the cube-root (or sampled-power) transformed score scale.
// Hyperparameters are marginalized by HMC over the analytic GP marginal
// likelihood; the latent surface is recovered in closed form per draw.
class CubeModel {
 public:
  CubeModel(ScoreDataset data, PriorConfig prior = {}, TransformSpec transform = {});

  const ScoreDataset& data() const { return data_; }
  const TransformSpec& transform() const { return transform_; }
  double gp_mean(double power_alpha) const;  // constant mean for a given exponent

  // Unnormalized log posterior of the unconstrained hyperparameter vector
  // [log lengthscales, log signal_sd, log noise_sd (, log power_alpha)],
  // including prior terms and log-scale Jacobians.
  double log_marginal_posterior(const Eigen::VectorXd& unconstrained,
                                Eigen::VectorXd* grad = nullptr) const;

  TargetDensity target() const;
  void fit(const HmcConfig& config);
  bool fitted() const { return fitted_; }
  const PosteriorDraws& draws() const;
  void set_draws(PosteriorDraws draws);  // accepts externally loaded draws

  // Per-draw conditional moments of the latent transformed score at raw-scale
  // query points (standardization is applied internally).
  LatentPrediction predict_latent(const Eigen::MatrixXd& query_raw) const;

  // Per-draw conditional ELPD draws: latent sampled from its conditional
  // normal, then mapped through the transform's moment identity.
  Eigen::MatrixXd elpd_draws(const Eigen::MatrixXd& query_raw, const Eigen::VectorXd& a_query,
                             RngStream& rng) const;

  void set_jitter(double jitter) { jitter_ = jitter; }
  double jitter() const { return jitter_; }

 private:
  struct Hyper {
    Eigen::VectorXd lengthscales;
    double signal_sd = 1.0;
    double noise_sd = 0.0;
    double power_alpha = 1.0 / 3.0;
  };
  Hyper hyper_from_row(const Eigen::VectorXd& row) const;
  Eigen::VectorXd response(double power_alpha) const;

  ScoreDataset data_;
  PriorConfig prior_;
  TransformSpec transform_;
  PosteriorDraws draws_;
  bool fitted_ = false;
  double jitter_ = 1e-8;
  Eigen::VectorXd lprime_safe_;  // nudged away from zero for power mode
};

}  // namespace lpa
