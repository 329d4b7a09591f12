#include "lpa/hmc.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "lpa/stats.hpp"

namespace lpa {

namespace {

constexpr double kDivergenceEnergy = 1000.0;

double kinetic(const Eigen::VectorXd& momentum, const Eigen::VectorXd& inv_mass) {
  if (inv_mass.size() == 0) return 0.5 * momentum.squaredNorm();
  return 0.5 * (inv_mass.array() * momentum.array().square()).sum();
}

Eigen::VectorXd draw_momentum(RngStream& rng, const Eigen::VectorXd& inv_mass, Eigen::Index dim) {
  Eigen::VectorXd p(dim);
  for (Eigen::Index i = 0; i < dim; ++i) p[i] = rng.normal();
  if (inv_mass.size() != 0) p.array() /= inv_mass.array().sqrt();
  return p;
}

// Nesterov dual averaging on log step size.
class DualAveraging {
 public:
  DualAveraging(double eps0, double target)
      : mu_(std::log(10.0 * eps0)), target_(target), log_eps_(std::log(eps0)), log_eps_bar_(std::log(eps0)) {}

  void update(double accept_prob) {
    ++t_;
    const double frac = 1.0 / (t_ + kT0);
    h_bar_ = (1.0 - frac) * h_bar_ + frac * (target_ - accept_prob);
    log_eps_ = mu_ - std::sqrt(static_cast<double>(t_)) / kGamma * h_bar_;
    const double eta = std::pow(static_cast<double>(t_), -kKappa);
    log_eps_bar_ = eta * log_eps_ + (1.0 - eta) * log_eps_bar_;
  }

  double eps() const { return std::exp(log_eps_); }
  double eps_bar() const { return std::exp(log_eps_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double mu_, target_;
  double log_eps_, log_eps_bar_;
  double h_bar_ = 0.0;
  long t_ = 0;
};

double find_reasonable_epsilon(const TargetDensity& target, const Eigen::VectorXd& position,
                               double logp0, const Eigen::VectorXd& inv_mass, RngStream& rng) {
  double eps = 1.0;
  const Eigen::VectorXd p = draw_momentum(rng, inv_mass, position.size());
  const double h0 = -logp0 + kinetic(p, inv_mass);

  auto log_ratio = [&](double step) {
    const LeapfrogResult r = leapfrog(position, p, step, 1, target, inv_mass);
    if (!r.finite) return -std::numeric_limits<double>::infinity();
    return h0 - (-r.log_density + kinetic(r.momentum, inv_mass));
  };

  double lr = log_ratio(eps);
  for (int i = 0; i < 60 && !std::isfinite(lr); ++i) {
    eps *= 0.5;
    lr = log_ratio(eps);
  }
  if (!std::isfinite(lr)) throw std::runtime_error("cannot find a stable step size");

  const double a = lr > std::log(0.5) ? 1.0 : -1.0;
  for (int i = 0; i < 60; ++i) {
    if (!(a * lr > -a * std::log(2.0))) break;
    eps *= std::pow(2.0, a);
    lr = log_ratio(eps);
    if (!std::isfinite(lr)) {
      if (a > 0) {  // grew too far; back off once and stop
        eps *= 0.5;
        break;
      }
      lr = -std::numeric_limits<double>::infinity();
    }
  }
  return eps;
}

struct ChainResult {
  Eigen::MatrixXd draws;
  Eigen::VectorXd log_posterior;
  long divergences = 0;
  double accept_rate = 0.0;
  double step_size = 0.0;
};

ChainResult run_chain(const TargetDensity& target, const HmcConfig& cfg, int chain_index) {
  const Eigen::Index dim = target.dim;
  RngStream rng(cfg.seed, static_cast<std::uint64_t>(chain_index));

  Eigen::VectorXd theta;
  if (target.initial) {
    theta = target.initial(rng);
  } else {
    theta.resize(dim);
    for (Eigen::Index i = 0; i < dim; ++i) theta[i] = 2.0 * rng.uniform() - 1.0;
  }
  if (theta.size() != dim) throw std::runtime_error("initial point has wrong dimension");

  Eigen::VectorXd grad(dim);
  double logp = target.logp_grad(theta, grad);
  if (!std::isfinite(logp)) throw std::runtime_error("initial point has non-finite density");

  Eigen::VectorXd inv_mass;  // empty = identity
  double eps = find_reasonable_epsilon(target, theta, logp, inv_mass, rng);
  DualAveraging da(eps, cfg.target_accept);

  // Mass window: second half of warmup up to the last tenth, which re-adapts
  // the step size under the new metric. Skipped for very short warmups.
  const int mass_lo = cfg.warmup / 2;
  const int mass_hi = cfg.warmup - std::max(cfg.warmup / 10, 25);
  const bool adapt_mass = cfg.warmup >= 100 && mass_hi - mass_lo >= 20;
  std::vector<Eigen::VectorXd> window;

  ChainResult out;
  out.draws.resize(cfg.samples, dim);
  out.log_posterior.resize(cfg.samples);

  double accept_sum = 0.0;
  const int total = cfg.warmup + cfg.samples;
  for (int iter = 0; iter < total; ++iter) {
    const bool warm = iter < cfg.warmup;
    const int n_steps = 1 + static_cast<int>(rng.integer(static_cast<std::uint64_t>(cfg.max_leapfrog)));
    const Eigen::VectorXd p = draw_momentum(rng, inv_mass, dim);
    const double h0 = -logp + kinetic(p, inv_mass);

    const LeapfrogResult prop = leapfrog(theta, p, eps, n_steps, target, inv_mass);
    double dh = std::numeric_limits<double>::infinity();
    if (prop.finite) dh = (-prop.log_density + kinetic(prop.momentum, inv_mass)) - h0;
    const bool divergent = !std::isfinite(dh) || dh > kDivergenceEnergy;
    const double alpha = divergent ? 0.0 : std::min(1.0, std::exp(-dh));

    if (!divergent && std::log(rng.uniform()) < -dh) {
      theta = prop.position;
      logp = prop.log_density;
    }

    if (warm) {
      da.update(alpha);
      eps = da.eps();
      if (adapt_mass) {
        if (iter >= mass_lo && iter < mass_hi) window.push_back(theta);
        if (iter + 1 == mass_hi && window.size() >= 10) {
          const auto count = static_cast<Eigen::Index>(window.size());
          Eigen::MatrixXd w(count, dim);
          for (Eigen::Index i = 0; i < count; ++i) w.row(i) = window[static_cast<std::size_t>(i)];
          inv_mass.resize(dim);
          const double shrink = static_cast<double>(count) / (count + 5.0);
          for (Eigen::Index j = 0; j < dim; ++j) {
            const double v = sample_variance(w.col(j));
            inv_mass[j] = std::max(shrink * v + (1.0 - shrink) * 1e-3, 1e-10);
          }
          window.clear();
          eps = find_reasonable_epsilon(target, theta, logp, inv_mass, rng);
          da = DualAveraging(eps, cfg.target_accept);
        }
      }
      if (iter + 1 == cfg.warmup) eps = da.eps_bar();
    } else {
      const int s = iter - cfg.warmup;
      out.draws.row(s) = target.constrained(theta);
      out.log_posterior[s] = logp;
      accept_sum += alpha;
      if (divergent) ++out.divergences;
    }
  }
  out.accept_rate = cfg.samples > 0 ? accept_sum / cfg.samples : 0.0;
  out.step_size = eps;
  return out;
}

}  // namespace

LeapfrogResult leapfrog(const Eigen::VectorXd& position, const Eigen::VectorXd& momentum,
                        double step, int n_steps, const TargetDensity& target,
                        const Eigen::VectorXd& inv_mass) {
  LeapfrogResult r;
  r.position = position;
  r.momentum = momentum;
  Eigen::VectorXd grad(position.size());
  double logp = target.logp_grad(r.position, grad);
  if (!std::isfinite(logp) || !grad.allFinite()) {
    r.finite = false;
    return r;
  }
  for (int s = 0; s < n_steps; ++s) {
    r.momentum += 0.5 * step * grad;
    if (inv_mass.size() == 0)
      r.position += step * r.momentum;
    else
      r.position.array() += step * inv_mass.array() * r.momentum.array();
    logp = target.logp_grad(r.position, grad);
    if (!std::isfinite(logp) || !grad.allFinite()) {
      r.finite = false;
      return r;
    }
    r.momentum += 0.5 * step * grad;
  }
  r.log_density = logp;
  return r;
}

double gradient_check(const TargetDensity& target, const Eigen::VectorXd& at, double h) {
  Eigen::VectorXd analytic(at.size());
  target.logp_grad(at, analytic);
  Eigen::VectorXd fd(at.size());
  Eigen::VectorXd x = at;
  Eigen::VectorXd scratch(at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = target.logp_grad(x, scratch);
    x[i] = orig - h;
    const double down = target.logp_grad(x, scratch);
    x[i] = orig;
    fd[i] = (up - down) / (2.0 * h);
  }
  const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
  return (fd - analytic).cwiseAbs().maxCoeff() / scale;
}

PosteriorDraws hmc_sample(const TargetDensity& target, const HmcConfig& cfg) {
  if (target.dim <= 0) throw std::invalid_argument("target dimension must be positive");
  if (static_cast<Eigen::Index>(target.names.size()) != target.dim)
    throw std::invalid_argument("target names must match dimension");
  if (cfg.warmup < 0 || cfg.samples <= 0 || cfg.chains <= 0 || cfg.max_leapfrog <= 0)
    throw std::invalid_argument("bad sampler configuration");
  if (!(cfg.target_accept > 0.0 && cfg.target_accept < 1.0))
    throw std::invalid_argument("target_accept must be in (0,1)");

  if (cfg.gradient_check_points > 0) {
    RngStream check_rng(cfg.seed, 0xC0FFEEu);
    for (int k = 0; k < cfg.gradient_check_points; ++k) {
      Eigen::VectorXd at;
      if (target.initial) {
        at = target.initial(check_rng);
      } else {
        at.resize(target.dim);
        for (Eigen::Index i = 0; i < target.dim; ++i) at[i] = 2.0 * check_rng.uniform() - 1.0;
      }
      const double err = gradient_check(target, at);
      if (!(err < 1e-4))
        throw std::runtime_error("target gradient check failed (relative error " +
                                 std::to_string(err) + ")");
    }
  }

  std::vector<ChainResult> results(static_cast<std::size_t>(cfg.chains));
  const int workers = std::max(1, std::min(cfg.threads, cfg.chains));
  if (workers == 1) {
    for (int c = 0; c < cfg.chains; ++c) results[static_cast<std::size_t>(c)] = run_chain(target, cfg, c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int c = next.fetch_add(1); c < cfg.chains; c = next.fetch_add(1))
            results[static_cast<std::size_t>(c)] = run_chain(target, cfg, c);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  PosteriorDraws out;
  out.columns = target.names;
  out.chains = cfg.chains;
  out.samples_per_chain = cfg.samples;
  out.seed = cfg.seed;
  out.draws.resize(static_cast<Eigen::Index>(cfg.chains) * cfg.samples, target.dim);
  out.log_posterior.resize(out.draws.rows());
  for (int c = 0; c < cfg.chains; ++c) {
    const ChainResult& r = results[static_cast<std::size_t>(c)];
    out.draws.middleRows(static_cast<Eigen::Index>(c) * cfg.samples, cfg.samples) = r.draws;
    out.log_posterior.segment(static_cast<Eigen::Index>(c) * cfg.samples, cfg.samples) = r.log_posterior;
    out.divergences += r.divergences;
    out.accept_rate.push_back(r.accept_rate);
    out.step_size.push_back(r.step_size);
  }
  return out;
}

}  // namespace lpa
