#include "lpa/simlab.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "lpa/gp_chisq.hpp"
#include "lpa/gp_cube.hpp"
#include "lpa/stats.hpp"

namespace lpa {

SimData simulate(const SimScenario& scenario, int replication) {
  if (scenario.n <= 0) throw std::invalid_argument("scenario needs a positive sample size");
  RngStream rng(scenario.seed, 0x5100u + static_cast<std::uint64_t>(replication));
  SimData sim;
  sim.x1.resize(scenario.n);
  sim.x2.resize(scenario.n);
  sim.eps.resize(scenario.n);
  sim.y.resize(scenario.n);

  std::vector<ScoreRecord> records;
  records.reserve(static_cast<std::size_t>(scenario.n));
  const double sd = std::sqrt(2.0);
  for (Eigen::Index i = 0; i < scenario.n; ++i) {
    sim.x1[i] = rng.normal();
    sim.x2[i] = rng.normal();
    sim.eps[i] = rng.normal();
    sim.y[i] = sim.x1[i] + sim.x2[i] + sim.eps[i];
    ScoreRecord r;
    r.observation_id = static_cast<long>(i + 1);
    r.predictive_sd = sd;
    r.raw_log_score = normal_logpdf(sim.y[i], sim.x1[i], sd);
    r.pooling = Eigen::VectorXd::Constant(1, sim.x2[i]);
    records.push_back(std::move(r));
  }
  sim.dataset = ScoreDataset("misspecified_regression", std::move(records));
  return sim;
}

double true_offset_a() { return -0.5 * std::log(4.0 * M_PI); }

double true_elpd(double x2) { return true_offset_a() - 0.25 * (1.0 + x2 * x2); }

Eigen::VectorXd sim_grid(const SimScenario& scenario) {
  if (scenario.grid_points < 2) throw std::invalid_argument("grid needs at least two points");
  return Eigen::VectorXd::LinSpaced(scenario.grid_points, scenario.grid_lo, scenario.grid_hi);
}

double mise(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth,
            const Eigen::VectorXd& weights) {
  if (estimate.size() != truth.size() || estimate.size() != weights.size())
    throw std::invalid_argument("mise inputs disagree in length");
  const double total = weights.sum();
  if (!(total > 0)) throw std::invalid_argument("weights must have positive mass");
  return (weights.array() * (estimate - truth).array().square()).sum() / total;
}

double mils(const Eigen::MatrixXd& eta_draws, const Eigen::VectorXd& truth,
            const Eigen::VectorXd& weights) {
  if (eta_draws.cols() != truth.size() || truth.size() != weights.size())
    throw std::invalid_argument("mils inputs disagree in length");
  const double total = weights.sum();
  if (!(total > 0)) throw std::invalid_argument("weights must have positive mass");
  double acc = 0.0;
  for (Eigen::Index g = 0; g < truth.size(); ++g)
    acc += weights[g] * kde_log_density(eta_draws.col(g), truth[g]);
  return acc / total;
}

std::string benchmark_name(BenchmarkMethod method) {
  switch (method) {
    case BenchmarkMethod::lprime_rw: return "lprime_rw";
    case BenchmarkMethod::lprime_mean: return "lprime_mean";
    case BenchmarkMethod::ldblprime_rw: return "ldblprime_rw";
    case BenchmarkMethod::ldblprime_mean: return "ldblprime_mean";
  }
  throw std::logic_error("unknown benchmark method");
}

BenchmarkResult benchmark_predict(const ScoreDataset& dataset, BenchmarkMethod method) {
  const bool cube_scale =
      method == BenchmarkMethod::ldblprime_rw || method == BenchmarkMethod::ldblprime_mean;
  const bool random_walk =
      method == BenchmarkMethod::lprime_rw || method == BenchmarkMethod::ldblprime_rw;
  const Eigen::VectorXd& s = cube_scale ? dataset.ldblprime() : dataset.lprime();
  const Eigen::Index n = s.size();
  if (n < 4) throw std::invalid_argument("benchmarks need at least four scores");

  BenchmarkResult out;
  for (Eigen::Index i = 3; i < n; ++i) {
    double mu, var;
    if (random_walk) {
      mu = s[i - 1];
      var = 0.0;
      for (Eigen::Index t = 1; t < i; ++t) {
        const double d = s[t] - s[t - 1];
        var += d * d;
      }
      var /= static_cast<double>(i - 1);
    } else {
      mu = s.head(i).mean();
      var = (s.head(i).array() - mu).square().sum() / static_cast<double>(i);
    }
    var = std::max(var, 1e-18);

    double ld = normal_logpdf(s[i], mu, std::sqrt(var));
    if (cube_scale) {
      // back to the raw score scale: l'' = (a - l)^{1/3}
      const double u = std::max(s[i], 1e-4);
      ld += -std::log(3.0) - 2.0 * std::log(u);
    }
    out.index.push_back(i);
    out.log_density.push_back(ld);
  }
  double total = 0.0;
  for (double v : out.log_density) total += v;
  out.mean_log_density = total / static_cast<double>(out.log_density.size());
  return out;
}

namespace {

StudyReplication evaluate_replication(const std::string& model, int rep,
                                      const Eigen::MatrixXd& eta, const Eigen::VectorXd& truth,
                                      const Eigen::VectorXd& weights) {
  StudyReplication row;
  row.replication = rep;
  row.model = model;
  row.eta_median.resize(eta.cols());
  for (Eigen::Index g = 0; g < eta.cols(); ++g) row.eta_median[g] = median(eta.col(g));
  row.mise = mise(row.eta_median, truth, weights);
  row.mils = mils(eta, truth, weights);
  return row;
}

StudySummary summarize(const std::string& model, const std::vector<StudyReplication>& rows) {
  std::vector<const StudyReplication*> mine;
  for (const auto& r : rows)
    if (r.model == model) mine.push_back(&r);
  const auto count = static_cast<double>(mine.size());
  StudySummary s;
  s.model = model;
  std::vector<double> mises;
  for (const auto* r : mine) {
    s.mise_mean += r->mise / count;
    s.mils_mean += r->mils / count;
    mises.push_back(r->mise);
  }
  double vm = 0.0, vl = 0.0;
  for (const auto* r : mine) {
    vm += (r->mise - s.mise_mean) * (r->mise - s.mise_mean);
    vl += (r->mils - s.mils_mean) * (r->mils - s.mils_mean);
  }
  if (mine.size() > 1) {
    s.mise_se = std::sqrt(vm / (count - 1) / count);
    s.mils_se = std::sqrt(vl / (count - 1) / count);
  }

  std::vector<std::size_t> order(mine.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return mises[a] < mises[b]; });
  auto at = [&](double q) {
    const auto pos = static_cast<std::size_t>(std::llround(q * (count - 1)));
    return mine[order[pos]]->replication;
  };
  s.rep_lo = at(0.025);
  s.rep_mid = at(0.5);
  s.rep_hi = at(0.975);
  return s;
}

}  // namespace

StudyResult run_study(const StudyConfig& config) {
  if (config.scenario.replications <= 0) throw std::invalid_argument("need at least one replication");
  if (!config.run_cube && !config.run_chisq) throw std::invalid_argument("no model selected");

  StudyResult result;
  result.grid = sim_grid(config.scenario);
  result.truth.resize(result.grid.size());
  for (Eigen::Index g = 0; g < result.grid.size(); ++g) result.truth[g] = true_elpd(result.grid[g]);
  Eigen::VectorXd weights(result.grid.size());
  for (Eigen::Index g = 0; g < result.grid.size(); ++g) weights[g] = normal_pdf(result.grid[g]);

  const Eigen::MatrixXd query = result.grid;  // one pooling dimension
  const Eigen::VectorXd a_query = Eigen::VectorXd::Constant(result.grid.size(), true_offset_a());

  const int models_per_rep = (config.run_cube ? 1 : 0) + (config.run_chisq ? 1 : 0);
  result.rows.resize(static_cast<std::size_t>(config.scenario.replications) *
                     static_cast<std::size_t>(models_per_rep));

  auto run_one = [&](int rep) {
    const SimData sim = simulate(config.scenario, rep);
    std::size_t slot = static_cast<std::size_t>(rep) * static_cast<std::size_t>(models_per_rep);
    if (config.run_cube) {
      CubeModel model(sim.dataset);
      HmcConfig cfg = config.cube_mcmc;
      cfg.seed = RngStream::mix(config.scenario.seed + 1, static_cast<std::uint64_t>(rep));
      model.fit(cfg);
      RngStream eta_rng(cfg.seed, 0xE7A0u);
      const Eigen::MatrixXd eta = model.elpd_draws(query, a_query, eta_rng);
      result.rows[slot++] = evaluate_replication("cube", rep, eta, result.truth, weights);
    }
    if (config.run_chisq) {
      ChisqModel model(sim.dataset);
      HmcConfig cfg = config.chisq_mcmc;
      cfg.seed = RngStream::mix(config.scenario.seed + 2, static_cast<std::uint64_t>(rep));
      model.fit(cfg);
      RngStream eta_rng(cfg.seed, 0xE7A0u);
      const Eigen::MatrixXd eta = model.elpd_draws(query, a_query, eta_rng);
      result.rows[slot++] = evaluate_replication("chisq", rep, eta, result.truth, weights);
    }
  };

  const int workers = std::max(1, std::min(config.threads, config.scenario.replications));
  if (workers == 1) {
    for (int rep = 0; rep < config.scenario.replications; ++rep) run_one(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int rep = next.fetch_add(1); rep < config.scenario.replications;
               rep = next.fetch_add(1))
            run_one(rep);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  if (config.run_cube) result.summaries.push_back(summarize("cube", result.rows));
  if (config.run_chisq) result.summaries.push_back(summarize("chisq", result.rows));
  return result;
}

}  // namespace lpa
