#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace lpa {

// Constrained-scale posterior sample, chain-major: row c * samples_per_chain + s
// is draw s of chain c. Column names identify parameters (lengthscale[j],
// signal_sd, noise_sd, b, latent[i], power_alpha).
struct PosteriorDraws {
  std::vector<std::string> columns;
  Eigen::MatrixXd draws;          // (chains * samples_per_chain) x columns
  Eigen::VectorXd log_posterior;  // unnormalized, same row order
  int chains = 0;
  int samples_per_chain = 0;
  std::uint64_t seed = 0;
  long divergences = 0;                 // sampling phase, all chains
  std::vector<double> accept_rate;      // per chain
  std::vector<double> step_size;        // per chain

  Eigen::Index size() const { return draws.rows(); }
  Eigen::Index column(const std::string& name) const;  // throws if absent
  void validate_layout() const;
  void validate() const;  // layout + column-name vocabulary (file contract)
};

void save_draws(const PosteriorDraws& draws, const std::string& path);
PosteriorDraws load_draws(const std::string& path);

// Split-Rhat over chain-major rows of one parameter column.
double split_rhat(const Eigen::VectorXd& values, int chains);
// Effective sample size (initial monotone positive sequence estimator).
double ess(const Eigen::VectorXd& values, int chains);

struct ChainDiagnostics {
  double max_rhat = 0.0;
  double min_ess = 0.0;
  double divergence_fraction = 0.0;
  bool ok(double rhat_limit = 1.05, double divergence_limit = 0.05) const {
    return max_rhat <= rhat_limit && divergence_fraction <= divergence_limit;
  }
};

ChainDiagnostics diagnose(const PosteriorDraws& draws);

}  // namespace lpa
