#include "lpa/draws.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "lpa/dataset.hpp"
#include "lpa/stats.hpp"

namespace lpa {

namespace {

// Names are restricted to the model parameter vocabulary so that files can be
// validated without knowing which model produced them.
bool known_column(const std::string& name) {
  if (name == "signal_sd" || name == "noise_sd" || name == "b" || name == "power_alpha")
    return true;
  for (const char* prefix : {"lengthscale[", "latent["}) {
    const std::size_t len = std::string(prefix).size();
    if (name.rfind(prefix, 0) == 0 && name.size() > len + 0 && name.back() == ']') {
      const std::string digits = name.substr(len, name.size() - len - 1);
      if (digits.empty()) return false;
      return std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; });
    }
  }
  return false;
}

}  // namespace

Eigen::Index PosteriorDraws::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("draws have no column '" + name + "'");
  return static_cast<Eigen::Index>(it - columns.begin());
}

void PosteriorDraws::validate_layout() const {
  if (draws.rows() == 0) throw std::runtime_error("no draws");
  if (static_cast<Eigen::Index>(columns.size()) != draws.cols())
    throw std::runtime_error("draws column-name count does not match matrix width");
  if (log_posterior.size() != draws.rows())
    throw std::runtime_error("log_posterior length does not match draw count");
  if (chains <= 0 || samples_per_chain <= 0 ||
      static_cast<Eigen::Index>(chains) * samples_per_chain != draws.rows())
    throw std::runtime_error("chain layout does not match draw count");
  for (const std::string& name : columns)
    if (std::count(columns.begin(), columns.end(), name) != 1)
      throw std::runtime_error("duplicate column '" + name + "'");
  if (!draws.allFinite() || !log_posterior.allFinite())
    throw std::runtime_error("draws contain non-finite values");
}

void PosteriorDraws::validate() const {
  validate_layout();
  for (const std::string& name : columns)
    if (!known_column(name)) throw std::runtime_error("unknown column '" + name + "'");
}

void save_draws(const PosteriorDraws& draws, const std::string& path) {
  draws.validate();
  nlohmann::json header;
  header["columns"] = draws.columns;
  header["chains"] = draws.chains;
  header["samples_per_chain"] = draws.samples_per_chain;
  header["seed"] = draws.seed;
  header["divergences"] = draws.divergences;
  header["accept_rate"] = draws.accept_rate;
  header["step_size"] = draws.step_size;

  std::ostringstream os;
  os << header.dump() << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < draws.draws.rows(); ++i) {
    for (Eigen::Index j = 0; j < draws.draws.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", draws.draws(i, j));
      os << buf << ",";
    }
    std::snprintf(buf, sizeof buf, "%.17g", draws.log_posterior[i]);
    os << buf << "\n";
  }
  atomic_write_text(path, os.str());
}

PosteriorDraws load_draws(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open draws file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw std::runtime_error(path + ": no draws");

  PosteriorDraws out;
  try {
    const nlohmann::json header = nlohmann::json::parse(line);
    out.columns = header.at("columns").get<std::vector<std::string>>();
    out.chains = header.at("chains").get<int>();
    out.samples_per_chain = header.at("samples_per_chain").get<int>();
    out.seed = header.at("seed").get<std::uint64_t>();
    out.divergences = header.at("divergences").get<long>();
    out.accept_rate = header.at("accept_rate").get<std::vector<double>>();
    out.step_size = header.at("step_size").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": bad draws header: " + e.what());
  }

  const std::size_t width = out.columns.size() + 1;  // + log posterior
  std::vector<double> flat;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string tok;
    std::size_t got = 0;
    while (std::getline(is, tok, ',')) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0')
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
      flat.push_back(v);
      ++got;
    }
    if (got != width)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(width) + " fields, got " + std::to_string(got));
    ++rows;
  }
  if (rows == 0) throw std::runtime_error(path + ": no draws");

  out.draws.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out.columns.size()));
  out.log_posterior.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j + 1 < width; ++j)
      out.draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = flat[i * width + j];
    out.log_posterior[static_cast<Eigen::Index>(i)] = flat[i * width + width - 1];
  }
  try {
    out.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return out;
}

namespace {

// Split each chain into halves; returns sequences as columns of an m x k matrix.
Eigen::MatrixXd split_sequences(const Eigen::VectorXd& values, int chains) {
  if (chains <= 0 || values.size() % chains != 0)
    throw std::invalid_argument("values do not divide into chains");
  const Eigen::Index per = values.size() / chains;
  const Eigen::Index half = per / 2;
  if (half < 2) throw std::invalid_argument("chains too short for split diagnostics");
  Eigen::MatrixXd seq(half, 2 * chains);
  for (int c = 0; c < chains; ++c) {
    seq.col(2 * c) = values.segment(c * per, half);
    seq.col(2 * c + 1) = values.segment(c * per + per - half, half);
  }
  return seq;
}

}  // namespace

double split_rhat(const Eigen::VectorXd& values, int chains) {
  const Eigen::MatrixXd seq = split_sequences(values, chains);
  const Eigen::Index m = seq.rows(), k = seq.cols();
  Eigen::VectorXd means(k), vars(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    means[j] = seq.col(j).mean();
    vars[j] = sample_variance(seq.col(j));
  }
  const double w = vars.mean();
  const double b = static_cast<double>(m) * sample_variance(means);
  if (w <= 0.0) return 1.0;  // constant sequences
  const double var_plus = (static_cast<double>(m - 1) / m) * w + b / static_cast<double>(m);
  return std::sqrt(var_plus / w);
}

double ess(const Eigen::VectorXd& values, int chains) {
  const Eigen::MatrixXd seq = split_sequences(values, chains);
  const Eigen::Index m = seq.rows(), k = seq.cols();
  Eigen::VectorXd means(k), vars(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    means[j] = seq.col(j).mean();
    vars[j] = sample_variance(seq.col(j));
  }
  const double w = vars.mean();
  if (w <= 0.0) return 0.0;
  const double var_plus =
      (static_cast<double>(m - 1) / m) * w + sample_variance(means);

  // Biased (1/m) autocovariances, averaged across sequences.
  Eigen::MatrixXd centered = seq.rowwise() - means.transpose();
  auto acov = [&](Eigen::Index t) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < k; ++j)
      total += centered.col(j).head(m - t).dot(centered.col(j).tail(m - t));
    return total / static_cast<double>(k * m);
  };

  double tau = 1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 1; t + 1 < m; t += 2) {
    const double rho_a = 1.0 - (w - acov(t)) / var_plus;
    const double rho_b = 1.0 - (w - acov(t + 1)) / var_plus;
    double pair = rho_a + rho_b;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);  // enforce monotone decrease
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  const double total = static_cast<double>(k) * static_cast<double>(m);
  return std::min(total, total / tau);
}

ChainDiagnostics diagnose(const PosteriorDraws& draws) {
  draws.validate_layout();
  ChainDiagnostics d;
  d.min_ess = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < draws.draws.cols(); ++j) {
    d.max_rhat = std::max(d.max_rhat, split_rhat(draws.draws.col(j), draws.chains));
    d.min_ess = std::min(d.min_ess, ess(draws.draws.col(j), draws.chains));
  }
  d.divergence_fraction = static_cast<double>(draws.divergences) /
                          static_cast<double>(draws.draws.rows());
  return d;
}

}  // namespace lpa
