#include "lpa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lpa/stats.hpp"

namespace lpa {

void PriorConfig::validate() const {
  if (lengthscale_shape <= 0 || lengthscale_scale <= 0)
    throw std::invalid_argument("lengthscale prior shape/scale must be positive");
  if (signal_sd_prior_scale <= 0 || noise_sd_prior_scale <= 0 || b_prior_scale <= 0 ||
      power_alpha_prior_sd <= 0)
    throw std::invalid_argument("prior scales must be positive");
}

namespace {

std::string row_label(std::size_t i, long id) {
  std::ostringstream os;
  os << "row " << i + 1 << " (id " << id << ")";
  return os.str();
}

}  // namespace

ScoreDataset::ScoreDataset(std::string expert_name, std::vector<ScoreRecord> records)
    : expert_name_(std::move(expert_name)), records_(std::move(records)) {
  const Eigen::Index n = static_cast<Eigen::Index>(records_.size());
  if (n == 0) throw std::invalid_argument("dataset '" + expert_name_ + "' has no rows");
  dim_ = records_.front().pooling.size();
  if (dim_ <= 0) throw std::invalid_argument("dataset '" + expert_name_ + "' has no pooling variables");

  raw_.resize(n);
  a_.resize(n);
  lprime_.resize(n);
  ldblprime_.resize(n);
  pooling_raw_.resize(n, dim_);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ScoreRecord& r = records_[static_cast<std::size_t>(i)];
    const std::string where = row_label(static_cast<std::size_t>(i), r.observation_id);
    if (r.pooling.size() != dim_)
      throw std::invalid_argument(where + ": expected " + std::to_string(dim_) +
                                  " pooling variables, got " + std::to_string(r.pooling.size()));
    if (!std::isfinite(r.raw_log_score) || !r.pooling.allFinite() || !std::isfinite(r.predictive_sd))
      throw std::invalid_argument(where + ": non-finite value");
    if (r.predictive_sd <= 0.0)
      throw std::invalid_argument(where + ": predictive_sd must be positive");
    const double a = offset_a(r.predictive_sd);
    double lp;
    try {
      lp = to_lprime(r.raw_log_score, a);
    } catch (const std::exception&) {
      throw std::invalid_argument(
          where + ": inconsistent score: log_score exceeds the Gaussian density bound "
                  "implied by predictive_sd");
    }
    raw_[i] = r.raw_log_score;
    a_[i] = a;
    lprime_[i] = lp;
    ldblprime_[i] = std::cbrt(lp);
    pooling_raw_.row(i) = r.pooling.transpose();
  }

  standardizer_.mean.resize(dim_);
  standardizer_.scale.resize(dim_);
  for (Eigen::Index j = 0; j < dim_; ++j) {
    standardizer_.mean[j] = pooling_raw_.col(j).mean();
    const double sd = n > 1 ? std::sqrt(sample_variance(pooling_raw_.col(j))) : 0.0;
    standardizer_.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  z_ = standardizer_.apply(pooling_raw_);
}

ScoreDataset ScoreDataset::empty(std::string expert_name, Eigen::Index dim) {
  if (dim <= 0) throw std::invalid_argument("empty dataset needs a positive pooling dimension");
  ScoreDataset d;
  d.expert_name_ = std::move(expert_name);
  d.dim_ = dim;
  d.pooling_raw_.resize(0, dim);
  d.z_.resize(0, dim);
  d.standardizer_.mean = Eigen::VectorXd::Zero(dim);
  d.standardizer_.scale = Eigen::VectorXd::Ones(dim);
  return d;
}

Eigen::MatrixXd ScoreDataset::standardize(const Eigen::MatrixXd& query_raw) const {
  if (query_raw.cols() != dim_)
    throw std::invalid_argument("query has " + std::to_string(query_raw.cols()) +
                                " pooling variables, dataset has " + std::to_string(dim_));
  return standardizer_.apply(query_raw);
}

ScoreDataset ScoreDataset::head(Eigen::Index count) const {
  if (count < 0 || count > n()) throw std::out_of_range("head: bad count");
  std::vector<ScoreRecord> sub(records_.begin(), records_.begin() + count);
  if (count == 0) return empty(expert_name_, dim_);
  return ScoreDataset(expert_name_, std::move(sub));
}

namespace {

char sniff_delimiter(const std::string& header) {
  for (char c : {',', '\t', ';'})
    if (header.find(c) != std::string::npos) return c;
  return ' ';
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ') {
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
  }
  std::string tok;
  std::istringstream is(line);
  while (std::getline(is, tok, delim)) {
    while (!tok.empty() && (tok.back() == '\r' || tok.back() == ' ')) tok.pop_back();
    while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
    out.push_back(tok);
  }
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

double parse_double(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(where + ": cannot parse '" + tok + "' as a number");
  }
}

}  // namespace

ScoreDataset load_dataset(const std::string& path, const ColumnSchema& schema,
                          std::string expert_name) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open score file '" + path + "'");
  if (expert_name.empty()) expert_name = std::filesystem::path(path).stem().string();

  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error(path + ": empty file");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const char delim = sniff_delimiter(header);
  const std::vector<std::string> names = split_line(header, delim);

  auto find_col = [&](const std::string& name, bool required) -> int {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
      if (required)
        throw std::runtime_error(path + ": missing required column '" + name + "'");
      return -1;
    }
    return static_cast<int>(it - names.begin());
  };

  const int id_col = find_col(schema.id, false);
  const int score_col = find_col(schema.log_score, true);
  const int sd_col = find_col(schema.predictive_sd, true);

  std::vector<int> pool_cols;
  if (schema.pooling.empty()) {
    for (int j = 0; j < static_cast<int>(names.size()); ++j)
      if (j != id_col && j != score_col && j != sd_col) pool_cols.push_back(j);
  } else {
    for (const std::string& name : schema.pooling) pool_cols.push_back(find_col(name, true));
  }
  if (pool_cols.empty()) throw std::runtime_error(path + ": no pooling-variable columns");

  std::vector<ScoreRecord> records;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> toks = split_line(line, delim);
    const std::string where = path + ":" + std::to_string(line_no);
    if (toks.size() != names.size())
      throw std::runtime_error(where + ": expected " + std::to_string(names.size()) +
                               " fields, got " + std::to_string(toks.size()));
    ScoreRecord r;
    r.observation_id = id_col >= 0
                           ? static_cast<long>(parse_double(toks[static_cast<std::size_t>(id_col)], where))
                           : static_cast<long>(records.size() + 1);
    r.raw_log_score = parse_double(toks[static_cast<std::size_t>(score_col)], where);
    r.predictive_sd = parse_double(toks[static_cast<std::size_t>(sd_col)], where);
    r.pooling.resize(static_cast<Eigen::Index>(pool_cols.size()));
    for (std::size_t j = 0; j < pool_cols.size(); ++j)
      r.pooling[static_cast<Eigen::Index>(j)] =
          parse_double(toks[static_cast<std::size_t>(pool_cols[j])], where);
    records.push_back(std::move(r));
  }
  if (records.empty()) throw std::runtime_error(path + ": no data rows");
  try {
    return ScoreDataset(std::move(expert_name), std::move(records));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void save_dataset(const ScoreDataset& dataset, const std::string& path) {
  std::ostringstream os;
  os << "id,log_score,predictive_sd";
  for (Eigen::Index j = 0; j < dataset.dim(); ++j) os << ",z" << j + 1;
  os << "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (const ScoreRecord& r : dataset.records()) {
    os << r.observation_id << ",";
    put(r.raw_log_score);
    os << ",";
    put(r.predictive_sd);
    for (Eigen::Index j = 0; j < r.pooling.size(); ++j) {
      os << ",";
      put(r.pooling[j]);
    }
    os << "\n";
  }
  atomic_write_text(path, os.str());
}

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace lpa
