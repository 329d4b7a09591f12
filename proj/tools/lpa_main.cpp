// Batch front end: simulate / fit / predict / pool / backtest / evaluate.
// Every command resolves its options (config file, then flags; flags win),
// writes its outputs atomically under --out, and records a manifest that is
// sufficient to reproduce those outputs bitwise.

#include <CLI11.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lpa/dataset.hpp"
#include "lpa/draws.hpp"
#include "lpa/gp_chisq.hpp"
#include "lpa/gp_cube.hpp"
#include "lpa/hmc.hpp"
#include "lpa/pooling.hpp"
#include "lpa/rng.hpp"
#include "lpa/simlab.hpp"
#include "lpa/stats.hpp"
#include "lpa/transforms.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

int env_threads() {
  const char* v = std::getenv("LPA_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  const long t = std::strtol(v, nullptr, 10);
  return t >= 1 ? static_cast<int>(t) : 1;
}

// Delimiter-separated table writer (always comma on output).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void save(const std::string& path) const {
    std::string text;
    for (std::size_t j = 0; j < header.size(); ++j)
      text += (j ? "," : "") + header[j];
    text += "\n";
    for (const auto& row : rows) {
      for (std::size_t j = 0; j < row.size(); ++j) text += (j ? "," : "") + row[j];
      text += "\n";
    }
    lpa::atomic_write_text(path, text);
  }
};

// Header + numeric body loader for query points, eta draws and pool history.
std::pair<std::vector<std::string>, Eigen::MatrixXd> read_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  char delim = ',';
  auto count = [&](char c) { return std::count(line.begin(), line.end(), c); };
  for (char cand : {'\t', ';'})
    if (count(cand) > count(delim)) delim = cand;
  if (count(delim) == 0 && count(' ') > 0) delim = ' ';

  auto fields = [&](const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, delim)) out.push_back(item);
    return out;
  };

  const std::vector<std::string> header = fields(line);
  std::vector<std::vector<double>> body;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto parts = fields(line);
    if (parts.size() != header.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(parts.size()));
    std::vector<double> row;
    for (const auto& p : parts) {
      char* end = nullptr;
      const double v = std::strtod(p.c_str(), &end);
      if (end == p.c_str() || *end != '\0')
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": not a number: " + p);
      row.push_back(v);
    }
    body.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(body.size()),
                    static_cast<Eigen::Index>(header.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = body[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return {header, m};
}

std::string expert_label(const std::string& path) { return fs::path(path).stem().string(); }

Eigen::VectorXd parse_grid(const std::string& spec) {
  const auto parts = split(spec, ':');
  if (parts.size() != 3) throw std::runtime_error("--grid expects lo:hi:points");
  const double lo = std::stod(parts[0]), hi = std::stod(parts[1]);
  const int n = std::stoi(parts[2]);
  if (n < 1) throw std::runtime_error("--grid needs at least one point");
  if (n == 1) return Eigen::VectorXd::Constant(1, lo);
  return Eigen::VectorXd::LinSpaced(n, lo, hi);
}

Eigen::VectorXd parse_c_grid(const std::string& spec) {
  if (spec.empty()) return lpa::default_c_grid();
  const auto parts = split(spec, ':');
  if (parts.size() != 3) throw std::runtime_error("--c-grid expects lo:hi:step");
  const double lo = std::stod(parts[0]), hi = std::stod(parts[1]), step = std::stod(parts[2]);
  if (!(step > 0) || hi < lo) throw std::runtime_error("--c-grid needs lo <= hi and step > 0");
  std::vector<double> vals;
  for (double c = lo; c <= hi + 1e-12; c += step) vals.push_back(c);
  return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

void write_manifest(const std::string& out_dir, const std::string& command, json options,
                    std::uint64_t seed) {
  json m;
  m["command"] = command;
  m["options"] = std::move(options);
  m["seed"] = seed;
  m["versions"] = {{"lpa", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  lpa::atomic_write_text((fs::path(out_dir) / "manifest.json").string(), m.dump(2) + "\n");
}

lpa::ColumnSchema make_schema(const std::string& pooling_vars) {
  lpa::ColumnSchema schema;
  if (!pooling_vars.empty()) schema.pooling = split(pooling_vars, ',');
  return schema;
}

// Shared hyperparameter / sampler / prior flags.
struct ModelOpts {
  std::string model = "cube";
  int draws = 1000;
  int warmup = 500;
  int chains = 4;
  int max_leapfrog = 512;
  double target_accept = 0.8;
  int threads = 0;  // 0: use LPA_THREADS (default 1)
  double jitter = 1e-8;
  std::optional<double> gp_mean;
  double lengthscale_shape = 5.0, lengthscale_scale = 5.0;
  double signal_scale = 1.0, noise_scale = 1.0, b_scale = 0.25, power_alpha_sd = 0.1;

  void add_to(CLI::App* cmd, bool sampler) {
    cmd->add_option("--model", model, "Model: cube, chisq or power")
        ->check(CLI::IsMember({"cube", "chisq", "power"}));
    if (sampler) {
      cmd->add_option("--draws", draws, "Posterior draws per chain");
      cmd->add_option("--warmup", warmup, "Warmup iterations per chain");
      cmd->add_option("--chains", chains, "Number of chains");
      cmd->add_option("--max-leapfrog", max_leapfrog, "Upper bound on leapfrog steps");
      cmd->add_option("--target-accept", target_accept, "Step-size adaptation target");
      cmd->add_option("--threads", threads, "Worker threads (default: LPA_THREADS or 1)");
    }
    cmd->add_option("--jitter", jitter, "Cholesky jitter");
    cmd->add_option("--gp-mean", gp_mean, "Constant GP mean override");
    cmd->add_option("--lengthscale-shape", lengthscale_shape, "Lengthscale prior shape");
    cmd->add_option("--lengthscale-scale", lengthscale_scale, "Lengthscale prior scale");
    cmd->add_option("--signal-scale", signal_scale, "Signal sd prior scale");
    cmd->add_option("--noise-scale", noise_scale, "Noise sd prior scale");
    cmd->add_option("--b-scale", b_scale, "Scale prior sd (chisq model)");
    cmd->add_option("--power-alpha-sd", power_alpha_sd, "Exponent prior sd (power model)");
  }

  lpa::PriorConfig prior() const {
    lpa::PriorConfig p;
    p.lengthscale_shape = lengthscale_shape;
    p.lengthscale_scale = lengthscale_scale;
    p.signal_sd_prior_scale = signal_scale;
    p.noise_sd_prior_scale = noise_scale;
    p.b_prior_scale = b_scale;
    p.power_alpha_prior_sd = power_alpha_sd;
    p.gp_mean = gp_mean;
    return p;
  }

  lpa::HmcConfig hmc(std::uint64_t seed) const {
    lpa::HmcConfig cfg;
    cfg.warmup = warmup;
    cfg.samples = draws;
    cfg.chains = chains;
    cfg.max_leapfrog = max_leapfrog;
    cfg.target_accept = target_accept;
    cfg.threads = threads > 0 ? threads : env_threads();
    cfg.seed = seed;
    return cfg;
  }

  json to_json() const {
    json j;
    j["model"] = model;
    j["draws"] = draws;
    j["warmup"] = warmup;
    j["chains"] = chains;
    j["max_leapfrog"] = max_leapfrog;
    j["target_accept"] = target_accept;
    j["threads"] = threads > 0 ? threads : env_threads();
    j["jitter"] = jitter;
    if (gp_mean) j["gp_mean"] = *gp_mean;
    j["lengthscale_shape"] = lengthscale_shape;
    j["lengthscale_scale"] = lengthscale_scale;
    j["signal_scale"] = signal_scale;
    j["noise_scale"] = noise_scale;
    j["b_scale"] = b_scale;
    j["power_alpha_sd"] = power_alpha_sd;
    return j;
  }
};

lpa::TransformSpec transform_for(const std::string& model) {
  lpa::TransformSpec t;
  if (model == "power") t.kind = lpa::TransformKind::power;
  return t;
}

// Fit one expert with the chosen model; returns the draws.
lpa::PosteriorDraws fit_model(const lpa::ScoreDataset& data, const ModelOpts& opts,
                              std::uint64_t seed) {
  if (opts.model == "chisq") {
    lpa::ChisqModel model(data, opts.prior());
    model.set_jitter(opts.jitter);
    model.fit(opts.hmc(seed));
    return model.draws();
  }
  lpa::CubeModel model(data, opts.prior(), transform_for(opts.model));
  model.set_jitter(opts.jitter);
  model.fit(opts.hmc(seed));
  return model.draws();
}

Eigen::MatrixXd elpd_from_draws(const lpa::ScoreDataset& data, const ModelOpts& opts,
                                lpa::PosteriorDraws draws, const Eigen::MatrixXd& query,
                                const Eigen::VectorXd& a_query, lpa::RngStream& rng) {
  if (opts.model == "chisq") {
    lpa::ChisqModel model(data, opts.prior());
    model.set_jitter(opts.jitter);
    model.set_draws(std::move(draws));
    return model.elpd_draws(query, a_query, rng);
  }
  lpa::CubeModel model(data, opts.prior(), transform_for(opts.model));
  model.set_jitter(opts.jitter);
  model.set_draws(std::move(draws));
  return model.elpd_draws(query, a_query, rng);
}

json diagnostics_json(const std::string& label, const std::string& model,
                      const lpa::PosteriorDraws& draws, const lpa::ChainDiagnostics& diag) {
  json j;
  j["expert"] = label;
  j["model"] = model;
  j["chains"] = draws.chains;
  j["samples_per_chain"] = draws.samples_per_chain;
  j["seed"] = draws.seed;
  j["max_rhat"] = diag.max_rhat;
  j["min_ess"] = diag.min_ess;
  j["divergences"] = draws.divergences;
  j["divergence_fraction"] = diag.divergence_fraction;
  j["accept_rate"] = draws.accept_rate;
  j["step_size"] = draws.step_size;
  j["ok"] = diag.ok();
  return j;
}

std::string canonical_method(std::string m) {
  if (m == "softmax") return "softmax_fixed_c";
  return m;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  lpa::SimScenario scenario;
  std::string out;
};

int run_simulate(const SimulateOpts& o) {
  fs::create_directories(o.out);
  for (int rep = 0; rep < o.scenario.replications; ++rep) {
    const lpa::SimData sim = lpa::simulate(o.scenario, rep);
    lpa::save_dataset(sim.dataset,
                      (fs::path(o.out) / ("scores_rep" + std::to_string(rep) + ".csv")).string());
  }
  const Eigen::VectorXd grid = lpa::sim_grid(o.scenario);
  Table truth;
  truth.header = {"x2", "elpd"};
  for (Eigen::Index g = 0; g < grid.size(); ++g)
    truth.rows.push_back({num(grid[g]), num(lpa::true_elpd(grid[g]))});
  truth.save((fs::path(o.out) / "truth.csv").string());

  json opts;
  opts["n"] = o.scenario.n;
  opts["replications"] = o.scenario.replications;
  opts["grid_points"] = o.scenario.grid_points;
  opts["grid_lo"] = o.scenario.grid_lo;
  opts["grid_hi"] = o.scenario.grid_hi;
  write_manifest(o.out, "simulate", opts, o.scenario.seed);
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitOpts {
  std::vector<std::string> files;
  std::string pooling_vars;
  ModelOpts model;
  std::uint64_t seed = 0;
  std::string out;
};

int run_fit(const FitOpts& o) {
  fs::create_directories(o.out);
  bool all_ok = true;
  json experts = json::array();
  for (std::size_t k = 0; k < o.files.size(); ++k) {
    const std::string label = expert_label(o.files[k]);
    const lpa::ScoreDataset data =
        lpa::load_dataset(o.files[k], make_schema(o.pooling_vars), label);
    const std::uint64_t fit_seed = lpa::RngStream::mix(o.seed, 0xF170u + k);
    const lpa::PosteriorDraws draws = fit_model(data, o.model, fit_seed);
    lpa::save_draws(draws, (fs::path(o.out) / (label + "_draws.csv")).string());
    const lpa::ChainDiagnostics diag = lpa::diagnose(draws);
    const json dj = diagnostics_json(label, o.model.model, draws, diag);
    lpa::atomic_write_text((fs::path(o.out) / (label + "_diagnostics.json")).string(),
                           dj.dump(2) + "\n");
    std::cout << label << ": max_rhat=" << diag.max_rhat << " min_ess=" << diag.min_ess
              << " divergence_fraction=" << diag.divergence_fraction
              << (diag.ok() ? " ok" : " FAILED") << "\n";
    if (!diag.ok()) all_ok = false;
    experts.push_back(dj);
  }
  json opts = o.model.to_json();
  opts["expert_files"] = o.files;
  opts["pooling_vars"] = o.pooling_vars;
  opts["experts"] = experts;
  write_manifest(o.out, "fit", opts, o.seed);
  return all_ok ? 0 : 3;
}

// ----------------------------------------------------------------- predict

struct PredictOpts {
  std::string file;
  std::string pooling_vars;
  std::string draws_file;
  std::string grid_spec;
  std::string query_file;
  ModelOpts model;
  std::optional<double> offset;
  bool emit_eta_draws = false;
  std::uint64_t seed = 0;
  std::string out;
};

int run_predict(const PredictOpts& o) {
  fs::create_directories(o.out);
  const std::string label = expert_label(o.file);
  const lpa::ScoreDataset data = lpa::load_dataset(o.file, make_schema(o.pooling_vars), label);

  Eigen::MatrixXd query;
  if (!o.query_file.empty()) {
    auto [header, m] = read_matrix(o.query_file);
    if (m.cols() != data.dim())
      throw std::runtime_error(o.query_file + ": expected " + std::to_string(data.dim()) +
                               " pooling columns, got " + std::to_string(m.cols()));
    query = m;
  } else if (!o.grid_spec.empty()) {
    if (data.dim() != 1)
      throw std::runtime_error("--grid only applies to one pooling dimension; use --query-file");
    query = parse_grid(o.grid_spec);
  } else {
    throw std::runtime_error("predict needs --grid or --query-file");
  }

  const double a_const = o.offset ? *o.offset : data.a().mean();
  const Eigen::VectorXd a_query = Eigen::VectorXd::Constant(query.rows(), a_const);
  lpa::RngStream rng(o.seed, 0xE7A0u);
  const Eigen::MatrixXd eta =
      elpd_from_draws(data, o.model, lpa::load_draws(o.draws_file), query, a_query, rng);

  Table summary;
  summary.header = {"query"};
  for (Eigen::Index j = 0; j < query.cols(); ++j)
    summary.header.push_back("z" + std::to_string(j + 1));
  for (const char* s : {"mean", "sd", "median", "hpd_lo", "hpd_hi"})
    summary.header.push_back(std::string("eta_") + s);
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    std::vector<std::string> row{std::to_string(q)};
    for (Eigen::Index j = 0; j < query.cols(); ++j) row.push_back(num(query(q, j)));
    const Eigen::VectorXd col = eta.col(q);
    const lpa::Interval hpd = lpa::hpd_interval(col, 0.95);
    row.push_back(num(col.mean()));
    row.push_back(num(std::sqrt(lpa::sample_variance(col))));
    row.push_back(num(lpa::median(col)));
    row.push_back(num(hpd.lo));
    row.push_back(num(hpd.hi));
    summary.rows.push_back(std::move(row));
  }
  summary.save((fs::path(o.out) / "eta_summary.csv").string());

  if (o.emit_eta_draws) {
    Table draws;
    for (Eigen::Index q = 0; q < eta.cols(); ++q)
      draws.header.push_back("q" + std::to_string(q));
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
      std::vector<std::string> row;
      for (Eigen::Index q = 0; q < eta.cols(); ++q) row.push_back(num(eta(i, q)));
      draws.rows.push_back(std::move(row));
    }
    draws.save((fs::path(o.out) / "eta_draws.csv").string());
  }

  json opts = o.model.to_json();
  opts["expert_file"] = o.file;
  opts["draws_file"] = o.draws_file;
  opts["pooling_vars"] = o.pooling_vars;
  opts["grid"] = o.grid_spec;
  opts["query_file"] = o.query_file;
  opts["offset_a"] = a_const;
  opts["emit_eta_draws"] = o.emit_eta_draws;
  write_manifest(o.out, "predict", opts, o.seed);
  return 0;
}

// -------------------------------------------------------------------- pool

struct PoolOpts {
  std::string method;
  std::vector<std::string> eta_files;
  std::vector<std::string> expert_files;
  int experts = 0;
  double c = 0.0;
  std::string c_grid_spec;
  std::string history_file;
  std::uint64_t seed = 0;
  std::string out;
};

int run_pool(const PoolOpts& o) {
  fs::create_directories(o.out);
  const std::string method = canonical_method(o.method);

  std::vector<std::string> labels;
  Table weights;
  Table pooled;
  double c_used = method == "softmax_fixed_c" ? o.c : 0.0;

  if (method == "optimal") {
    if (o.expert_files.size() < 2)
      throw std::runtime_error("--method optimal needs at least two --expert-file inputs");
    std::vector<lpa::ScoreDataset> data;
    for (const auto& f : o.expert_files) {
      labels.push_back(expert_label(f));
      data.push_back(lpa::load_dataset(f, {}, labels.back()));
      if (data.back().n() != data.front().n())
        throw std::runtime_error("expert score files disagree in length");
    }
    const auto k = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd scores(data.front().n(), k);
    for (Eigen::Index j = 0; j < k; ++j) scores.col(j) = data[static_cast<std::size_t>(j)].raw_log_scores();
    const Eigen::VectorXd w = lpa::optimal_pool_weights(scores);

    weights.header = {"row"};
    for (const auto& l : labels) weights.header.push_back("weight_" + l);
    std::vector<std::string> row{"0"};
    for (Eigen::Index j = 0; j < k; ++j) row.push_back(num(w[j]));
    weights.rows.push_back(std::move(row));

    pooled.header = {"row", "pooled_log_density"};
    for (Eigen::Index i = 0; i < scores.rows(); ++i)
      pooled.rows.push_back(
          {std::to_string(i), num(lpa::pooled_log_density(scores.row(i).transpose(), w))});
    pooled.save((fs::path(o.out) / "pooled.csv").string());
  } else if (method == "equal" && o.eta_files.empty()) {
    if (o.experts < 1) throw std::runtime_error("--method equal needs --eta-file inputs or --experts");
    const Eigen::VectorXd w = lpa::equal_weights(o.experts);
    weights.header = {"row"};
    for (int j = 0; j < o.experts; ++j)
      weights.header.push_back("weight_expert" + std::to_string(j + 1));
    std::vector<std::string> row{"0"};
    for (int j = 0; j < o.experts; ++j) row.push_back(num(w[j]));
    weights.rows.push_back(std::move(row));
  } else {
    if (o.eta_files.size() < 2)
      throw std::runtime_error("pooling needs at least two --eta-file inputs");
    std::vector<Eigen::MatrixXd> eta;
    for (const auto& f : o.eta_files) {
      labels.push_back(expert_label(f));
      eta.push_back(read_matrix(f).second);
      if (eta.back().rows() != eta.front().rows() || eta.back().cols() != eta.front().cols())
        throw std::runtime_error(f + ": eta draw files disagree in shape");
    }
    const auto k = static_cast<Eigen::Index>(eta.size());
    const Eigen::Index q_points = eta.front().cols();

    if (method == "dynamic") {
      if (o.history_file.empty()) throw std::runtime_error("--method dynamic needs --history-file");
      auto [header, hist] = read_matrix(o.history_file);
      if (hist.cols() != 2 * k)
        throw std::runtime_error(o.history_file + ": expected " + std::to_string(2 * k) +
                                 " columns (best probabilities then log densities)");
      std::vector<lpa::PoolHistoryStep> steps;
      for (Eigen::Index t = 0; t < hist.rows(); ++t) {
        lpa::PoolHistoryStep s;
        s.best_prob = hist.row(t).head(k).transpose();
        s.realized_log_densities = hist.row(t).tail(k).transpose();
        steps.push_back(std::move(s));
      }
      const Eigen::VectorXd grid = parse_c_grid(o.c_grid_spec);
      c_used = lpa::dynamic_c(steps, grid);
      pooled.header = {"row", "pooled_log_density"};
      for (std::size_t t = 0; t < steps.size(); ++t)
        pooled.rows.push_back(
            {std::to_string(t),
             num(lpa::pooled_log_density(steps[t].realized_log_densities,
                                         lpa::softmax_weights(steps[t].best_prob, c_used)))});
      pooled.save((fs::path(o.out) / "pooled.csv").string());
    }

    weights.header = {"query"};
    for (const auto& l : labels) weights.header.push_back("best_prob_" + l);
    for (const auto& l : labels) weights.header.push_back("weight_" + l);
    weights.header.push_back("c");

    lpa::RngStream rng(o.seed, 0xBE57u);
    for (Eigen::Index q = 0; q < q_points; ++q) {
      Eigen::MatrixXd aligned(eta.front().rows(), k);
      for (Eigen::Index j = 0; j < k; ++j) aligned.col(j) = eta[static_cast<std::size_t>(j)].col(q);
      const Eigen::VectorXd p = lpa::prob_best(aligned, rng);
      Eigen::VectorXd w;
      if (method == "equal") w = lpa::equal_weights(k);
      else if (method == "natural") w = lpa::natural_weights(p);
      else if (method == "selection") w = lpa::selection_weights(aligned);
      else if (method == "softmax_fixed_c" || method == "dynamic")
        w = lpa::softmax_weights(p, c_used);
      else throw std::runtime_error("unknown pooling method: " + o.method);

      std::vector<std::string> row{std::to_string(q)};
      for (Eigen::Index j = 0; j < k; ++j) row.push_back(num(p[j]));
      for (Eigen::Index j = 0; j < k; ++j) row.push_back(num(w[j]));
      row.push_back(num(c_used));
      weights.rows.push_back(std::move(row));
    }
  }
  weights.save((fs::path(o.out) / "weights.csv").string());

  json opts;
  opts["method"] = method;
  opts["eta_files"] = o.eta_files;
  opts["expert_files"] = o.expert_files;
  opts["experts"] = o.experts;
  opts["c"] = o.c;
  opts["c_grid"] = o.c_grid_spec;
  opts["history_file"] = o.history_file;
  opts["c_used"] = c_used;
  write_manifest(o.out, "pool", opts, o.seed);
  return 0;
}

// ---------------------------------------------------------------- backtest

struct BacktestOpts {
  std::vector<std::string> files;
  std::string pooling_vars;
  bool benchmarks_only = false;
  std::string pool_methods = "equal,natural,selection,softmax,dynamic,optimal";
  double c = 10.0;
  std::string c_grid_spec;
  Eigen::Index min_history = 10;
  Eigen::Index stride = 1;
  ModelOpts model;
  std::uint64_t seed = 0;
  std::string out;
};

int run_backtest(const BacktestOpts& o) {
  fs::create_directories(o.out);
  std::vector<lpa::ScoreDataset> data;
  std::vector<std::string> labels;
  for (const auto& f : o.files) {
    labels.push_back(expert_label(f));
    data.push_back(lpa::load_dataset(f, make_schema(o.pooling_vars), labels.back()));
  }

  // benchmark methods on each expert's own score history
  Table bench;
  bench.header = {"expert", "method", "steps", "mean_log_density", "median_log_density"};
  for (std::size_t k = 0; k < data.size(); ++k) {
    for (lpa::BenchmarkMethod method :
         {lpa::BenchmarkMethod::lprime_rw, lpa::BenchmarkMethod::lprime_mean,
          lpa::BenchmarkMethod::ldblprime_rw, lpa::BenchmarkMethod::ldblprime_mean}) {
      const lpa::BenchmarkResult r = lpa::benchmark_predict(data[k], method);
      const Eigen::Map<const Eigen::VectorXd> ld(r.log_density.data(),
                                                 static_cast<Eigen::Index>(r.log_density.size()));
      bench.rows.push_back({labels[k], lpa::benchmark_name(method),
                            std::to_string(r.log_density.size()), num(r.mean_log_density),
                            num(lpa::median(ld))});
    }
  }
  bench.save((fs::path(o.out) / "benchmarks.csv").string());

  int gate_failures = 0;
  if (!o.benchmarks_only) {
    const auto k = static_cast<Eigen::Index>(data.size());
    if (k < 2) throw std::runtime_error("pooled backtest needs at least two experts");
    const Eigen::Index n = data.front().n();
    for (const auto& d : data)
      if (d.n() != n) throw std::runtime_error("expert score files disagree in length");
    if (o.min_history < 4) throw std::runtime_error("--min-history must be at least 4");
    if (o.min_history >= n) throw std::runtime_error("--min-history leaves no steps to score");

    std::vector<std::string> methods;
    for (auto& m : split(o.pool_methods, ',')) methods.push_back(canonical_method(m));

    Eigen::MatrixXd raw(n, k);
    for (Eigen::Index j = 0; j < k; ++j) raw.col(j) = data[static_cast<std::size_t>(j)].raw_log_scores();

    std::map<std::string, std::vector<double>> realized;
    for (const auto& m : methods) realized[m] = {};
    for (const auto& l : labels) realized["expert:" + l] = {};

    std::vector<lpa::PoolHistoryStep> history;
    const Eigen::VectorXd c_grid = parse_c_grid(o.c_grid_spec);
    Table steps_table;
    steps_table.header = {"step"};
    for (const auto& l : labels) steps_table.header.push_back("best_prob_" + l);
    steps_table.header.push_back("dynamic_c");

    for (Eigen::Index t = o.min_history; t < n; t += o.stride) {
      Eigen::MatrixXd eta;
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto& full = data[static_cast<std::size_t>(j)];
        const lpa::ScoreDataset past = full.head(t);
        const std::uint64_t fit_seed =
            lpa::RngStream::mix(o.seed, static_cast<std::uint64_t>(t * k + j));
        const lpa::PosteriorDraws draws = fit_model(past, o.model, fit_seed);
        if (!lpa::diagnose(draws).ok()) ++gate_failures;
        const Eigen::MatrixXd query = full.pooling_raw().row(t);
        const Eigen::VectorXd a_query = Eigen::VectorXd::Constant(1, full.a()[t]);
        lpa::RngStream eta_rng(fit_seed, 0xE7A0u);
        const Eigen::MatrixXd col =
            elpd_from_draws(past, o.model, draws, query, a_query, eta_rng);
        if (eta.size() == 0) eta.resize(col.rows(), k);
        eta.col(j) = col;
      }

      lpa::RngStream tie_rng(lpa::RngStream::mix(o.seed, 0xBE57u), static_cast<std::uint64_t>(t));
      const Eigen::VectorXd p = lpa::prob_best(eta, tie_rng);
      const Eigen::VectorXd scores_t = raw.row(t).transpose();
      const double dyn_c = lpa::dynamic_c(history, c_grid);

      for (const auto& m : methods) {
        Eigen::VectorXd w;
        if (m == "equal") w = lpa::equal_weights(k);
        else if (m == "natural") w = lpa::natural_weights(p);
        else if (m == "selection") w = lpa::selection_weights(eta);
        else if (m == "softmax_fixed_c") w = lpa::softmax_weights(p, o.c);
        else if (m == "dynamic") w = lpa::softmax_weights(p, dyn_c);
        else if (m == "optimal") w = lpa::optimal_pool_weights(raw.topRows(t));
        else throw std::runtime_error("unknown pooling method: " + m);
        realized[m].push_back(lpa::pooled_log_density(scores_t, w));
      }
      for (Eigen::Index j = 0; j < k; ++j)
        realized["expert:" + labels[static_cast<std::size_t>(j)]].push_back(scores_t[j]);

      lpa::PoolHistoryStep step;
      step.best_prob = p;
      step.realized_log_densities = scores_t;
      history.push_back(std::move(step));

      std::vector<std::string> row{std::to_string(t)};
      for (Eigen::Index j = 0; j < k; ++j) row.push_back(num(p[j]));
      row.push_back(num(dyn_c));
      steps_table.rows.push_back(std::move(row));
    }
    steps_table.save((fs::path(o.out) / "steps.csv").string());

    Table pool_table;
    pool_table.header = {"method", "steps", "total_log_score", "mean_log_score"};
    auto emit = [&](const std::string& name) {
      const auto& v = realized[name];
      double total = 0.0;
      for (double x : v) total += x;
      pool_table.rows.push_back({name, std::to_string(v.size()), num(total),
                                 num(total / static_cast<double>(v.size()))});
    };
    for (const auto& l : labels) emit("expert:" + l);
    for (const auto& m : methods) emit(m);
    pool_table.save((fs::path(o.out) / "pooling.csv").string());
  }

  json opts = o.model.to_json();
  opts["expert_files"] = o.files;
  opts["pooling_vars"] = o.pooling_vars;
  opts["benchmarks_only"] = o.benchmarks_only;
  opts["pool_methods"] = o.pool_methods;
  opts["c"] = o.c;
  opts["c_grid"] = o.c_grid_spec;
  opts["min_history"] = o.min_history;
  opts["stride"] = o.stride;
  opts["gate_failures"] = gate_failures;
  write_manifest(o.out, "backtest", opts, o.seed);
  return gate_failures == 0 ? 0 : 3;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOpts {
  lpa::SimScenario scenario;
  int chisq_replications = 10;
  std::string models = "cube";
  ModelOpts model;  // shared sampler budget
  std::uint64_t seed = 0;
  std::string out;
};

int run_evaluate(const EvaluateOpts& o) {
  fs::create_directories(o.out);
  const std::vector<std::string> models = split(o.models, ',');

  Table rows_table, summary_table, curves_table, grid_table;
  rows_table.header = {"model", "replication", "mise", "mils"};
  summary_table.header = {"model",   "replications", "mise_mean", "mise_se", "mils_mean",
                          "mils_se", "rep_lo",       "rep_mid",   "rep_hi"};
  curves_table.header = {"model", "tag", "replication", "x2", "estimate", "truth"};
  grid_table.header = {"x2", "truth", "weight"};

  bool grid_written = false;
  for (const std::string& model : models) {
    if (model != "cube" && model != "chisq")
      throw std::runtime_error("--models entries must be cube or chisq");
    lpa::StudyConfig cfg;
    cfg.scenario = o.scenario;
    cfg.scenario.seed = o.seed;
    if (model == "chisq") cfg.scenario.replications = o.chisq_replications;
    cfg.run_cube = model == "cube";
    cfg.run_chisq = model == "chisq";
    cfg.cube_mcmc = o.model.hmc(0);
    cfg.chisq_mcmc = o.model.hmc(0);
    cfg.threads = o.model.threads > 0 ? o.model.threads : env_threads();

    const lpa::StudyResult res = lpa::run_study(cfg);
    if (!grid_written) {
      for (Eigen::Index g = 0; g < res.grid.size(); ++g)
        grid_table.rows.push_back(
            {num(res.grid[g]), num(res.truth[g]), num(lpa::normal_pdf(res.grid[g]))});
      grid_written = true;
    }
    for (const auto& row : res.rows)
      rows_table.rows.push_back(
          {row.model, std::to_string(row.replication), num(row.mise), num(row.mils)});
    for (const auto& s : res.summaries) {
      summary_table.rows.push_back({s.model, std::to_string(cfg.scenario.replications),
                                    num(s.mise_mean), num(s.mise_se), num(s.mils_mean),
                                    num(s.mils_se), std::to_string(s.rep_lo),
                                    std::to_string(s.rep_mid), std::to_string(s.rep_hi)});
      const std::vector<std::pair<std::string, int>> tagged = {
          {"lo", s.rep_lo}, {"mid", s.rep_mid}, {"hi", s.rep_hi}};
      for (const auto& [tag, rep] : tagged) {
        for (const auto& row : res.rows) {
          if (row.model != s.model || row.replication != rep) continue;
          for (Eigen::Index g = 0; g < res.grid.size(); ++g)
            curves_table.rows.push_back({s.model, tag, std::to_string(rep), num(res.grid[g]),
                                         num(row.eta_median[g]), num(res.truth[g])});
          break;
        }
      }
    }
  }

  rows_table.save((fs::path(o.out) / "study_rows.csv").string());
  summary_table.save((fs::path(o.out) / "study_summary.csv").string());
  curves_table.save((fs::path(o.out) / "study_curves.csv").string());
  grid_table.save((fs::path(o.out) / "grid.csv").string());

  json opts = o.model.to_json();
  opts["n"] = o.scenario.n;
  opts["replications"] = o.scenario.replications;
  opts["chisq_replications"] = o.chisq_replications;
  opts["grid_points"] = o.scenario.grid_points;
  opts["grid_lo"] = o.scenario.grid_lo;
  opts["grid_hi"] = o.scenario.grid_hi;
  opts["models"] = o.models;
  write_manifest(o.out, "evaluate", opts, o.seed);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local predictive ability: inference and pooling over a pooling space"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Structured config file; command-line flags win");

  SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "Write simulated expert score datasets");
  c_sim->add_option("--n", sim.scenario.n, "Observations per replication");
  c_sim->add_option("--replications", sim.scenario.replications, "Dataset replications");
  c_sim->add_option("--grid-points", sim.scenario.grid_points, "Truth grid resolution");
  c_sim->add_option("--grid-lo", sim.scenario.grid_lo, "Truth grid lower end");
  c_sim->add_option("--grid-hi", sim.scenario.grid_hi, "Truth grid upper end");
  c_sim->add_option("--seed", sim.scenario.seed, "Random seed");
  c_sim->add_option("--out", sim.out, "Output directory")->required();

  FitOpts fit;
  auto* c_fit = app.add_subcommand("fit", "Fit a model to expert score files");
  c_fit->add_option("--expert-file", fit.files, "Score file (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  c_fit->add_option("--pooling-vars", fit.pooling_vars, "Comma-separated pooling columns");
  fit.model.add_to(c_fit, true);
  c_fit->add_option("--seed", fit.seed, "Random seed");
  c_fit->add_option("--out", fit.out, "Output directory")->required();

  PredictOpts pred;
  auto* c_pred = app.add_subcommand("predict", "Posterior ELPD summaries at query points");
  c_pred->add_option("--expert-file", pred.file, "Score file the model was fit on")
      ->required()
      ->check(CLI::ExistingFile);
  c_pred->add_option("--pooling-vars", pred.pooling_vars, "Comma-separated pooling columns");
  c_pred->add_option("--draws-file", pred.draws_file, "Posterior draws from fit")
      ->required()
      ->check(CLI::ExistingFile);
  c_pred->add_option("--grid", pred.grid_spec, "Query grid lo:hi:points (1-d pooling)");
  c_pred->add_option("--query-file", pred.query_file, "Query points file")
      ->check(CLI::ExistingFile);
  pred.model.add_to(c_pred, false);
  c_pred->add_option("--offset-a", pred.offset, "Score offset at query points");
  c_pred->add_flag("--emit-eta-draws", pred.emit_eta_draws, "Also write raw eta draws");
  c_pred->add_option("--seed", pred.seed, "Random seed");
  c_pred->add_option("--out", pred.out, "Output directory")->required();

  PoolOpts pool;
  auto* c_pool = app.add_subcommand("pool", "Combination weights from eta draws or scores");
  c_pool
      ->add_option("--method", pool.method,
                   "equal, natural, selection, softmax_fixed_c, dynamic or optimal")
      ->required();
  c_pool->add_option("--eta-file", pool.eta_files, "Eta draws file per expert (repeatable)")
      ->check(CLI::ExistingFile);
  c_pool->add_option("--expert-file", pool.expert_files, "Score file per expert (optimal)")
      ->check(CLI::ExistingFile);
  c_pool->add_option("--experts", pool.experts, "Expert count (equal without eta files)");
  c_pool->add_option("--c", pool.c, "Softmax sharpness");
  c_pool->add_option("--c-grid", pool.c_grid_spec, "Sharpness grid lo:hi:step (dynamic)");
  c_pool->add_option("--history-file", pool.history_file,
                     "Past best-probabilities and realized log densities (dynamic)");
  c_pool->add_option("--seed", pool.seed, "Random seed");
  c_pool->add_option("--out", pool.out, "Output directory")->required();

  BacktestOpts back;
  auto* c_back = app.add_subcommand("backtest", "Expanding-window one-step-ahead evaluation");
  c_back->add_option("--expert-file", back.files, "Score file (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  c_back->add_option("--pooling-vars", back.pooling_vars, "Comma-separated pooling columns");
  c_back->add_flag("--benchmarks-only", back.benchmarks_only, "Skip the model-based pool");
  c_back->add_option("--pool-methods", back.pool_methods, "Comma-separated pooling methods");
  c_back->add_option("--c", back.c, "Fixed softmax sharpness");
  c_back->add_option("--c-grid", back.c_grid_spec, "Sharpness grid lo:hi:step");
  c_back->add_option("--min-history", back.min_history, "First forecast target index");
  c_back->add_option("--stride", back.stride, "Forecast every stride-th step");
  back.model.add_to(c_back, true);
  back.model.draws = 300;
  back.model.warmup = 300;
  back.model.chains = 2;
  back.model.max_leapfrog = 64;
  c_back->add_option("--seed", back.seed, "Random seed");
  c_back->add_option("--out", back.out, "Output directory")->required();

  EvaluateOpts eval;
  auto* c_eval = app.add_subcommand("evaluate", "Simulation study with MISE/MILS tables");
  c_eval->add_option("--n", eval.scenario.n, "Observations per replication");
  c_eval->add_option("--replications", eval.scenario.replications, "Replications (cube model)");
  c_eval->add_option("--chisq-replications", eval.chisq_replications, "Replications (chisq)");
  c_eval->add_option("--models", eval.models, "Comma-separated: cube, chisq");
  c_eval->add_option("--grid-points", eval.scenario.grid_points, "Grid resolution");
  c_eval->add_option("--grid-lo", eval.scenario.grid_lo, "Grid lower end");
  c_eval->add_option("--grid-hi", eval.scenario.grid_hi, "Grid upper end");
  eval.model.add_to(c_eval, true);
  eval.model.draws = 250;
  eval.model.warmup = 250;
  eval.model.chains = 1;
  eval.model.max_leapfrog = 32;
  c_eval->add_option("--seed", eval.seed, "Random seed");
  c_eval->add_option("--out", eval.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*c_sim) return run_simulate(sim);
    if (*c_fit) return run_fit(fit);
    if (*c_pred) return run_predict(pred);
    if (*c_pool) return run_pool(pool);
    if (*c_back) return run_backtest(back);
    if (*c_eval) return run_evaluate(eval);
  } catch (const std::exception& e) {
    std::cerr << "lpa: error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
