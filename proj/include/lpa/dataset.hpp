#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "lpa/transforms.hpp"

namespace lpa {

// One historical prediction: the realized log predictive density, the
// expert's predictive sd for that observation, and the pooling-variable
// vector the decision maker conditions on.
struct ScoreRecord {
  long observation_id = 0;
  double raw_log_score = 0.0;
  double predictive_sd = 0.0;
  Eigen::VectorXd pooling;
};

// Affine map applied to pooling variables at ingestion (per-column mean 0,
// sd 1). Query points must go through the same map.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const {
    return (raw.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
};

// Priors shared by both GP models.
struct PriorConfig {
  double lengthscale_shape = 5.0;  // inverse-gamma
  double lengthscale_scale = 5.0;
  double signal_sd_prior_scale = 1.0;
  double noise_sd_prior_scale = 1.0;
  double b_prior_scale = 0.25;
  double power_alpha_prior_sd = 0.1;   // half-normal-style prior centered at 1/3
  std::optional<double> gp_mean;       // constant GP mean; default depends on the model

  void validate() const;
};

// Validated per-expert score history, in temporal order, with the derived
// columns a, lprime and the cube-root scale filled in. Immutable after
// construction.
class ScoreDataset {
 public:
  ScoreDataset() = default;
  ScoreDataset(std::string expert_name, std::vector<ScoreRecord> records);

  // An empty dataset still needs a pooling dimension for prior prediction.
  static ScoreDataset empty(std::string expert_name, Eigen::Index dim);

  const std::string& expert_name() const { return expert_name_; }
  Eigen::Index n() const { return static_cast<Eigen::Index>(records_.size()); }
  Eigen::Index dim() const { return dim_; }
  const std::vector<ScoreRecord>& records() const { return records_; }

  const Eigen::VectorXd& raw_log_scores() const { return raw_; }
  const Eigen::VectorXd& a() const { return a_; }
  const Eigen::VectorXd& lprime() const { return lprime_; }
  const Eigen::VectorXd& ldblprime() const { return ldblprime_; }

  const Eigen::MatrixXd& pooling_raw() const { return pooling_raw_; }
  const Eigen::MatrixXd& z() const { return z_; }  // standardized
  const Standardizer& standardizer() const { return standardizer_; }
  Eigen::MatrixXd standardize(const Eigen::MatrixXd& query_raw) const;

  // Rows [0, count) as a new dataset; used by expanding-window evaluation.
  ScoreDataset head(Eigen::Index count) const;

 private:
  std::string expert_name_;
  std::vector<ScoreRecord> records_;
  Eigen::Index dim_ = 0;
  Eigen::VectorXd raw_, a_, lprime_, ldblprime_;
  Eigen::MatrixXd pooling_raw_, z_;
  Standardizer standardizer_;
};

// Header-based column mapping for delimiter-separated score files.
struct ColumnSchema {
  std::string id = "id";
  std::string log_score = "log_score";
  std::string predictive_sd = "predictive_sd";
  std::vector<std::string> pooling;  // empty: every remaining column
};

ScoreDataset load_dataset(const std::string& path, const ColumnSchema& schema = {},
                          std::string expert_name = "");

void save_dataset(const ScoreDataset& dataset, const std::string& path);

// Write via a temp file and rename, so partial output is never visible.
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace lpa
