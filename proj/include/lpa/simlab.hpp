#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lpa/dataset.hpp"
#include "lpa/hmc.hpp"
#include "lpa/rng.hpp"

namespace lpa {

// Misspecified-regression testbed: the outcome is x1 + x2 + noise but the
// expert regresses on x1 alone, so x2 (the pooling variable) indexes where the
// expert's predictions are locally good or bad.
struct SimScenario {
  Eigen::Index n = 150;
  int replications = 50;
  int grid_points = 61;
  double grid_lo = -3.0;
  double grid_hi = 3.0;
  std::uint64_t seed = 0;
};

struct SimData {
  ScoreDataset dataset;
  Eigen::VectorXd x1, x2, eps, y;
};

SimData simulate(const SimScenario& scenario, int replication = 0);

// Exact conditional ELPD of the testbed expert at pooling value x2.
double true_elpd(double x2);
double true_offset_a();  // its per-point score offset (constant predictive sd)

Eigen::VectorXd sim_grid(const SimScenario& scenario);

// Weighted integrated squared error of a point estimate over the grid.
double mise(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth,
            const Eigen::VectorXd& weights);
// Weighted integrated log score of the posterior draws (Gaussian KDE) at truth.
double mils(const Eigen::MatrixXd& eta_draws, const Eigen::VectorXd& truth,
            const Eigen::VectorXd& weights);

enum class BenchmarkMethod { lprime_rw, lprime_mean, ldblprime_rw, ldblprime_mean };
std::string benchmark_name(BenchmarkMethod method);

// Expanding-window one-step-ahead log predictive densities on the raw score
// scale. Forecasts start once at least three scores are available.
struct BenchmarkResult {
  std::vector<Eigen::Index> index;   // forecast targets, in temporal order
  std::vector<double> log_density;   // same length
  double mean_log_density = 0.0;
};
BenchmarkResult benchmark_predict(const ScoreDataset& dataset, BenchmarkMethod method);

// Simulation-study driver over independent replications.
struct StudyConfig {
  SimScenario scenario;
  bool run_cube = true;
  bool run_chisq = false;
  HmcConfig cube_mcmc;   // per-replication budgets
  HmcConfig chisq_mcmc;
  int threads = 1;
};

struct StudyReplication {
  int replication = 0;
  std::string model;
  double mise = 0.0;
  double mils = 0.0;
  Eigen::VectorXd eta_median;  // grid-length point estimate
};

struct StudySummary {
  std::string model;
  double mise_mean = 0.0, mise_se = 0.0;
  double mils_mean = 0.0, mils_se = 0.0;
  // Replication indices at the 2.5th, 50th and 97.5th MISE percentiles.
  int rep_lo = 0, rep_mid = 0, rep_hi = 0;
};

struct StudyResult {
  Eigen::VectorXd grid;
  Eigen::VectorXd truth;
  std::vector<StudyReplication> rows;
  std::vector<StudySummary> summaries;
};

StudyResult run_study(const StudyConfig& config);

}  // namespace lpa
