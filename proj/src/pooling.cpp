#include "lpa/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lpa/stats.hpp"

namespace lpa {

Eigen::VectorXd prob_best(const Eigen::MatrixXd& eta_draws, RngStream& rng) {
  const Eigen::Index m = eta_draws.rows(), k = eta_draws.cols();
  if (m == 0 || k == 0) throw std::invalid_argument("prob_best needs draws for at least one expert");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(k);
  std::vector<Eigen::Index> tied;
  for (Eigen::Index i = 0; i < m; ++i) {
    double best = eta_draws(i, 0);
    tied.assign(1, 0);
    for (Eigen::Index j = 1; j < k; ++j) {
      const double v = eta_draws(i, j);
      if (v > best) {
        best = v;
        tied.assign(1, j);
      } else if (v == best) {
        tied.push_back(j);
      }
    }
    const Eigen::Index pick =
        tied.size() == 1 ? tied[0] : tied[static_cast<std::size_t>(rng.integer(tied.size()))];
    p[pick] += 1.0;
  }
  return p / static_cast<double>(m);
}

Eigen::VectorXd softmax_weights(const Eigen::VectorXd& best_prob, double c) {
  if (best_prob.size() == 0) throw std::invalid_argument("empty probability vector");
  if (!(c >= 0)) throw std::invalid_argument("sharpness must be nonnegative");
  const Eigen::ArrayXd scaled = c * best_prob.array();
  const Eigen::ArrayXd shifted = scaled - scaled.maxCoeff();
  const Eigen::ArrayXd ex = shifted.exp();
  return (ex / ex.sum()).matrix();
}

double pooled_log_density(const Eigen::VectorXd& log_densities, const Eigen::VectorXd& weights) {
  if (log_densities.size() != weights.size())
    throw std::invalid_argument("log densities and weights disagree in length");
  double acc = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    acc = log_sum_exp(acc, std::log(weights[k]) + log_densities[k]);
  }
  if (!std::isfinite(acc)) throw std::domain_error("pooled density is zero");
  return acc;
}

Eigen::VectorXd default_c_grid() {
  Eigen::VectorXd grid(41);
  for (int i = 0; i < 41; ++i) grid[i] = 0.5 * i;
  return grid;
}

double dynamic_c(const std::vector<PoolHistoryStep>& history, const Eigen::VectorXd& grid) {
  if (history.empty()) return 0.0;  // nothing to tune on yet
  if (grid.size() == 0) throw std::invalid_argument("dynamic_c needs a nonempty grid");
  double best_c = grid[0];
  double best_total = -std::numeric_limits<double>::infinity();
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    double total = 0.0;
    for (const PoolHistoryStep& step : history)
      total += pooled_log_density(step.realized_log_densities,
                                  softmax_weights(step.best_prob, grid[g]));
    if (total > best_total) {  // strict: earliest grid value wins ties
      best_total = total;
      best_c = grid[g];
    }
  }
  return best_c;
}

Eigen::VectorXd selection_weights(const Eigen::MatrixXd& eta_draws) {
  if (eta_draws.rows() == 0 || eta_draws.cols() == 0)
    throw std::invalid_argument("selection needs draws for at least one expert");
  Eigen::Index best = 0;
  eta_draws.colwise().mean().maxCoeff(&best);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(eta_draws.cols());
  w[best] = 1.0;
  return w;
}

Eigen::VectorXd natural_weights(const Eigen::VectorXd& best_prob) { return best_prob; }

Eigen::VectorXd equal_weights(Eigen::Index k) {
  if (k <= 0) throw std::invalid_argument("need at least one expert");
  return Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
}

Eigen::VectorXd optimal_pool_weights(const Eigen::MatrixXd& scores, double tol, long max_iter) {
  const Eigen::Index n = scores.rows(), k = scores.cols();
  if (n == 0 || k == 0) throw std::invalid_argument("optimal pool needs scores");
  if (!scores.allFinite()) throw std::invalid_argument("scores must be finite");

  Eigen::VectorXd w = equal_weights(k);

  // Mean log pooled score and its gradient at w.
  auto objective = [&](const Eigen::VectorXd& weights, Eigen::VectorXd* grad) {
    Eigen::ArrayXd logw = weights.array().log();
    double total = 0.0;
    if (grad) grad->setZero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::ArrayXd terms = scores.row(i).transpose().array() + logw;
      const double lse = log_sum_exp(terms.matrix());
      total += lse;
      if (grad) *grad += ((scores.row(i).transpose().array() - lse).exp()).matrix();
    }
    if (grad) *grad /= static_cast<double>(n);  // d mean / d w_k
    return total / static_cast<double>(n);
  };

  Eigen::VectorXd grad(k);
  double value = objective(w, &grad);
  double step = 0.5;
  for (long it = 0; it < max_iter; ++it) {
    // KKT residual for the simplex: w.grad = 1 at the optimum (mean scale).
    const Eigen::ArrayXd residual = grad.array() - 1.0;
    const double stationarity = (w.array() * residual).abs().maxCoeff();
    const double improvement = residual.maxCoeff();
    if (stationarity <= tol && improvement <= tol) return w;

    const double scale = residual.abs().maxCoeff();
    const Eigen::ArrayXd direction = residual / (scale > 0 ? scale : 1.0);
    bool moved = false;
    for (int half = 0; half < 60; ++half) {
      Eigen::ArrayXd cand = w.array() * (step * direction).exp();
      cand /= cand.sum();
      Eigen::VectorXd cand_grad(k);
      const double cand_value = objective(cand.matrix(), &cand_grad);
      if (cand_value >= value) {
        w = cand.matrix();
        value = cand_value;
        grad = cand_grad;
        moved = true;
        if (half == 0) step = std::min(step * 2.0, 64.0);
        break;
      }
      step *= 0.5;
    }
    if (!moved) return w;  // line search exhausted at numerical optimum
  }
  return w;
}

}  // namespace lpa
