#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "lpa/rng.hpp"

namespace lpa {

struct PoolWeights {
  std::vector<std::string> experts;  // optional labels, may be empty
  Eigen::VectorXd weights;           // simplex
  Eigen::VectorXd best_prob;         // p_k = P(expert k is locally best)
  double c = 0.0;                    // sharpness used, when applicable
};

// P(expert k has the highest conditional ELPD), estimated across aligned
// posterior draws (one column per expert). Exact ties split uniformly at
// random per draw.
Eigen::VectorXd prob_best(const Eigen::MatrixXd& eta_draws, RngStream& rng);

// w = softmax(c p); c = 0 gives exactly equal weights.
Eigen::VectorXd softmax_weights(const Eigen::VectorXd& best_prob, double c);

// log of the weighted linear pool density from per-expert log densities.
double pooled_log_density(const Eigen::VectorXd& log_densities, const Eigen::VectorXd& weights);

// One past decision point: the best-probabilities that were available and the
// log predictive densities each expert then realized.
struct PoolHistoryStep {
  Eigen::VectorXd best_prob;
  Eigen::VectorXd realized_log_densities;
};

// Sharpness maximizing realized pooled log score over history; earliest grid
// value wins ties.
double dynamic_c(const std::vector<PoolHistoryStep>& history, const Eigen::VectorXd& grid);
Eigen::VectorXd default_c_grid();  // 0, 0.5, ..., 20

// All mass on the expert with the highest posterior-mean ELPD (first wins ties).
Eigen::VectorXd selection_weights(const Eigen::MatrixXd& eta_draws);

// w = p.
Eigen::VectorXd natural_weights(const Eigen::VectorXd& best_prob);

Eigen::VectorXd equal_weights(Eigen::Index k);

// Maximizes sum_i log(sum_k w_k exp(scores(i,k))) over the simplex via
// exponentiated-gradient ascent. scores: observations x experts.
Eigen::VectorXd optimal_pool_weights(const Eigen::MatrixXd& scores, double tol = 1e-8,
                                     long max_iter = 200000);

}  // namespace lpa
