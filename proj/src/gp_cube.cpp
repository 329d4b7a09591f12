#include "lpa/gp_cube.hpp"

#include <cmath>
#include <stdexcept>

#include "lpa/stats.hpp"

namespace lpa {

namespace {

constexpr double kLprimeFloor = 1e-12;  // keeps power-mode Jacobians finite

double inv_gamma_log_const(double shape, double scale) {
  return shape * std::log(scale) - std::lgamma(shape);
}

double half_normal_log_const(double sd) {
  return std::log(2.0) - 0.5 * std::log(2.0 * M_PI * sd * sd);
}

double truncated_normal_log_const(double mean, double sd) {
  return -0.5 * std::log(2.0 * M_PI * sd * sd) - std::log(normal_cdf(mean / sd));
}

}  // namespace

CubeModel::CubeModel(ScoreDataset data, PriorConfig prior, TransformSpec transform)
    : data_(std::move(data)), prior_(std::move(prior)), transform_(transform) {
  prior_.validate();
  if (transform_.kind == TransformKind::power && !(transform_.power_alpha > 0))
    throw std::invalid_argument("power transform needs a positive exponent");
  lprime_safe_ = data_.lprime().cwiseMax(kLprimeFloor);
}

Eigen::VectorXd CubeModel::response(double power_alpha) const {
  if (transform_.kind == TransformKind::cube_root) return data_.ldblprime();
  return lprime_safe_.array().pow(power_alpha).matrix();
}

double CubeModel::gp_mean(double power_alpha) const {
  if (prior_.gp_mean) return *prior_.gp_mean;
  if (data_.n() == 0) return 0.0;
  return response(power_alpha).mean();
}

CubeModel::Hyper CubeModel::hyper_from_row(const Eigen::VectorXd& row) const {
  Hyper h;
  const Eigen::Index d = data_.dim();
  h.lengthscales = row.head(d);
  h.signal_sd = row[d];
  h.noise_sd = row[d + 1];
  h.power_alpha = transform_.kind == TransformKind::power ? row[d + 2] : transform_.alpha();
  if (!(h.lengthscales.minCoeff() > 0) || !(h.signal_sd > 0) || !(h.noise_sd > 0) ||
      !(h.power_alpha > 0))
    throw std::runtime_error("hyperparameter draw outside its support");
  return h;
}

double CubeModel::log_marginal_posterior(const Eigen::VectorXd& unconstrained,
                                         Eigen::VectorXd* grad) const {
  const Eigen::Index d = data_.dim();
  const Eigen::Index n = data_.n();
  const bool power = transform_.kind == TransformKind::power;
  const Eigen::Index dim = d + 2 + (power ? 1 : 0);
  if (unconstrained.size() != dim) throw std::invalid_argument("hyperparameter vector has wrong size");
  if (grad) grad->setZero(dim);

  const Eigen::VectorXd lengthscales = unconstrained.head(d).array().exp();
  const double signal_sd = std::exp(unconstrained[d]);
  const double noise_sd = std::exp(unconstrained[d + 1]);
  const double power_alpha = power ? std::exp(unconstrained[d + 2]) : transform_.alpha();
  // exp over/underflow puts the constrained parameters outside their support
  if (!(lengthscales.minCoeff() > 0) || !lengthscales.allFinite() || !(signal_sd > 0) ||
      !std::isfinite(signal_sd) || !(noise_sd > 0) || !std::isfinite(noise_sd) ||
      !(power_alpha > 0) || !std::isfinite(power_alpha))
    return -std::numeric_limits<double>::infinity();

  // Priors with log-scale Jacobians folded in.
  double logp = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    logp += inv_gamma_log_const(prior_.lengthscale_shape, prior_.lengthscale_scale) -
            prior_.lengthscale_shape * std::log(lengthscales[j]) -
            prior_.lengthscale_scale / lengthscales[j];
    if (grad)
      (*grad)[j] += -prior_.lengthscale_shape + prior_.lengthscale_scale / lengthscales[j];
  }
  const double psig = prior_.signal_sd_prior_scale;
  logp += half_normal_log_const(psig) - 0.5 * signal_sd * signal_sd / (psig * psig) +
          std::log(signal_sd);
  if (grad) (*grad)[d] += -signal_sd * signal_sd / (psig * psig) + 1.0;
  const double psd = prior_.noise_sd_prior_scale;
  logp += half_normal_log_const(psd) - 0.5 * noise_sd * noise_sd / (psd * psd) +
          std::log(noise_sd);
  if (grad) (*grad)[d + 1] += -noise_sd * noise_sd / (psd * psd) + 1.0;
  if (power) {
    const double pa = prior_.power_alpha_prior_sd;
    const double dev = power_alpha - 1.0 / 3.0;
    logp += truncated_normal_log_const(1.0 / 3.0, pa) - 0.5 * dev * dev / (pa * pa) +
            std::log(power_alpha);
    if (grad) (*grad)[d + 2] += -dev * power_alpha / (pa * pa) + 1.0;
  }

  if (n == 0) return logp;  // prior only

  // Change of variables from the raw score scale to the transformed scale.
  if (power) {
    logp += static_cast<double>(n) * std::log(power_alpha) +
            (power_alpha - 1.0) * lprime_safe_.array().log().sum();
    if (grad)
      (*grad)[d + 2] += power_alpha * (static_cast<double>(n) / power_alpha +
                                       lprime_safe_.array().log().sum());
  }

  KernelConfig cfg;
  cfg.signal_sd = signal_sd;
  cfg.lengthscales = lengthscales;
  const Eigen::MatrixXd g = gram(data_.z(), cfg);
  Eigen::MatrixXd k = g;
  k.diagonal().array() += noise_sd * noise_sd + jitter_;

  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd l = llt.matrixL();

  const Eigen::VectorXd y = response(power_alpha);
  const double mu = gp_mean(power_alpha);
  const Eigen::VectorXd r = (y.array() - mu).matrix();
  const Eigen::VectorXd alpha = llt.solve(r);

  logp += -0.5 * r.dot(alpha) - l.diagonal().array().log().sum() -
          0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);

  if (grad) {
    // d logL / d theta = 0.5 <alpha alpha^T - K^{-1}, dK/d theta>
    Eigen::MatrixXd b = -llt.solve(Eigen::MatrixXd::Identity(n, n));
    b += alpha * alpha.transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
      double acc = 0.0;
      const double inv_l2 = 1.0 / (lengthscales[j] * lengthscales[j]);
      for (Eigen::Index p = 0; p < n; ++p)
        for (Eigen::Index q = 0; q < n; ++q) {
          const double dz = data_.z()(p, j) - data_.z()(q, j);
          acc += b(p, q) * g(p, q) * dz * dz * inv_l2;
        }
      (*grad)[j] += 0.5 * acc;
    }
    (*grad)[d] += (b.array() * g.array()).sum();            // dG/dlog signal_sd = 2G
    (*grad)[d + 1] += noise_sd * noise_sd * b.trace();      // dK/dlog noise_sd = 2 sigma^2 I
    if (power) {
      Eigen::VectorXd dy = (y.array() * lprime_safe_.array().log()).matrix();
      if (!prior_.gp_mean) dy.array() -= dy.mean();
      (*grad)[d + 2] += -power_alpha * alpha.dot(dy);
    }
  }
  return logp;
}

TargetDensity CubeModel::target() const {
  const Eigen::Index d = data_.dim();
  const bool power = transform_.kind == TransformKind::power;
  TargetDensity t;
  t.dim = d + 2 + (power ? 1 : 0);
  for (Eigen::Index j = 0; j < d; ++j) t.names.push_back("lengthscale[" + std::to_string(j + 1) + "]");
  t.names.emplace_back("signal_sd");
  t.names.emplace_back("noise_sd");
  if (power) t.names.emplace_back("power_alpha");
  t.logp_grad = [this](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    return log_marginal_posterior(u, &grad);
  };
  t.constrain = [](const Eigen::VectorXd& u) { return u.array().exp().matrix().eval(); };
  t.initial = [d, power](RngStream& rng) {
    Eigen::VectorXd u(d + 2 + (power ? 1 : 0));
    for (Eigen::Index j = 0; j < d + 2; ++j) u[j] = 0.5 * rng.normal();
    if (power) u[d + 2] = std::log(1.0 / 3.0) + 0.15 * rng.normal();
    return u;
  };
  return t;
}

void CubeModel::fit(const HmcConfig& config) {
  draws_ = hmc_sample(target(), config);
  fitted_ = true;
}

const PosteriorDraws& CubeModel::draws() const {
  if (!fitted_) throw std::logic_error("model has not been fitted");
  return draws_;
}

void CubeModel::set_draws(PosteriorDraws draws) {
  draws.validate_layout();
  const std::vector<std::string> expected = target().names;
  if (draws.columns != expected)
    throw std::runtime_error("draws do not match this model's parameters");
  for (Eigen::Index i = 0; i < draws.draws.rows(); ++i) hyper_from_row(draws.draws.row(i));
  draws_ = std::move(draws);
  fitted_ = true;
}

LatentPrediction CubeModel::predict_latent(const Eigen::MatrixXd& query_raw) const {
  const PosteriorDraws& dr = draws();
  const Eigen::MatrixXd zq = data_.standardize(query_raw);
  const Eigen::Index m = dr.size(), q = zq.rows(), n = data_.n();

  LatentPrediction out;
  out.mean.resize(m, q);
  out.var.resize(m, q);

  for (Eigen::Index i = 0; i < m; ++i) {
    const Hyper h = hyper_from_row(dr.draws.row(i));
    const double mu = gp_mean(h.power_alpha);
    KernelConfig cfg;
    cfg.signal_sd = h.signal_sd;
    cfg.lengthscales = h.lengthscales;
    const double prior_var = h.signal_sd * h.signal_sd;
    if (n == 0) {
      out.mean.row(i).setConstant(mu);
      out.var.row(i).setConstant(prior_var);
      continue;
    }
    Eigen::MatrixXd k = gram(data_.z(), cfg);
    k.diagonal().array() += h.noise_sd * h.noise_sd + jitter_;
    const Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) throw std::runtime_error("training covariance not positive definite");
    const Eigen::VectorXd r = (response(h.power_alpha).array() - mu).matrix();
    const Eigen::VectorXd alpha = llt.solve(r);
    const Eigen::MatrixXd cross = cross_gram(data_.z(), zq, cfg);  // n x q
    out.mean.row(i) = ((cross.transpose() * alpha).array() + mu).matrix().transpose();
    const Eigen::MatrixXd w = llt.matrixL().solve(cross);
    const double tol = 1e-10 * std::max(1.0, prior_var);
    for (Eigen::Index c = 0; c < q; ++c) {
      double v = prior_var - w.col(c).squaredNorm();
      if (v < -tol) throw std::runtime_error("conditional variance went negative");
      out.var(i, c) = std::max(v, 0.0);
    }
  }
  return out;
}

Eigen::MatrixXd CubeModel::elpd_draws(const Eigen::MatrixXd& query_raw,
                                      const Eigen::VectorXd& a_query, RngStream& rng) const {
  if (a_query.size() != query_raw.rows())
    throw std::invalid_argument("need one offset per query point");
  const LatentPrediction pred = predict_latent(query_raw);
  const PosteriorDraws& dr = draws();
  const bool power = transform_.kind == TransformKind::power;
  const Eigen::Index d = data_.dim();

  Eigen::MatrixXd eta(pred.mean.rows(), pred.mean.cols());
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    const double noise_sd = dr.draws(i, d + 1);
    const double noise_var = noise_sd * noise_sd;
    const double power_alpha = power ? dr.draws(i, d + 2) : transform_.alpha();
    for (Eigen::Index c = 0; c < eta.cols(); ++c) {
      const double f = pred.mean(i, c) + std::sqrt(pred.var(i, c)) * rng.normal();
      eta(i, c) = power ? elpd_from_latent_power(a_query[c], f, noise_var, power_alpha)
                        : elpd_from_latent_cube(a_query[c], f, noise_var);
    }
  }
  return eta;
}

}  // namespace lpa
