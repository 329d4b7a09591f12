#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lpa/draws.hpp"
#include "lpa/rng.hpp"

namespace lpa {

// Differentiable unnormalized log density on an unconstrained parameter
// vector, plus the map back to the constrained (reported) scale.
struct TargetDensity {
  Eigen::Index dim = 0;
  std::vector<std::string> names;  // constrained-scale column names, size dim
  // Returns log density; fills grad (size dim). Must be finite-safe: may
  // return -inf with arbitrary grad outside the support.
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)> logp_grad;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> constrain;  // default identity
  std::function<Eigen::VectorXd(RngStream&)> initial;                // unconstrained start

  Eigen::VectorXd constrained(const Eigen::VectorXd& u) const {
    return constrain ? constrain(u) : u;
  }
};

struct HmcConfig {
  int warmup = 500;
  int samples = 1000;  // per chain
  int chains = 4;
  double target_accept = 0.8;
  int max_leapfrog = 512;  // steps per iteration drawn uniformly from 1..max_leapfrog
  std::uint64_t seed = 0;
  int threads = 1;
  int gradient_check_points = 1;  // finite-difference sanity checks before sampling
};

struct LeapfrogResult {
  Eigen::VectorXd position;
  Eigen::VectorXd momentum;
  double log_density = 0.0;  // at final position
  bool finite = true;
};

// Standard leapfrog integrator with diagonal inverse mass (ones if empty).
LeapfrogResult leapfrog(const Eigen::VectorXd& position, const Eigen::VectorXd& momentum,
                        double step, int n_steps, const TargetDensity& target,
                        const Eigen::VectorXd& inv_mass = Eigen::VectorXd());

// Max relative error between analytic and central-difference gradients.
double gradient_check(const TargetDensity& target, const Eigen::VectorXd& at, double h = 1e-5);

PosteriorDraws hmc_sample(const TargetDensity& target, const HmcConfig& config);

}  // namespace lpa
