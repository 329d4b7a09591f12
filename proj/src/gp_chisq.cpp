#include "lpa/gp_chisq.hpp"

#include <cmath>
#include <stdexcept>

#include "lpa/stats.hpp"

namespace lpa {

namespace {

constexpr double kLprimeFloor = 1e-12;

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

ChisqModel::ChisqModel(ScoreDataset data, PriorConfig prior)
    : data_(std::move(data)), prior_(std::move(prior)) {
  prior_.validate();
  latent_mean_ = prior_.gp_mean.value_or(0.0);
  lprime_safe_ = data_.lprime().cwiseMax(kLprimeFloor);
}

ChisqModel::Split ChisqModel::split_row(const Eigen::VectorXd& row) const {
  const Eigen::Index n = data_.n(), d = data_.dim();
  if (row.size() != n + d + 2) throw std::runtime_error("draw row has wrong size");
  Split s;
  s.v = row.head(n);
  s.lengthscales = row.segment(n, d);
  s.signal_sd = row[n + d];
  s.b = row[n + d + 1];
  if (!(s.lengthscales.minCoeff() > 0) || !(s.signal_sd > 0) || !(s.b > 0))
    throw std::runtime_error("hyperparameter draw outside its support");
  return s;
}

double ChisqModel::joint_log_posterior(const Eigen::VectorXd& unconstrained,
                                       Eigen::VectorXd* grad) const {
  const Eigen::Index n = data_.n(), d = data_.dim();
  const Eigen::Index dim = n + d + 2;
  if (unconstrained.size() != dim) throw std::invalid_argument("parameter vector has wrong size");
  if (grad) grad->setZero(dim);

  const Eigen::VectorXd v = unconstrained.head(n);
  const Eigen::VectorXd lengthscales = unconstrained.segment(n, d).array().exp();
  const double signal_sd = std::exp(unconstrained[n + d]);
  const double b = std::exp(unconstrained[n + d + 1]);
  // exp over/underflow puts the constrained parameters outside their support
  if (!(lengthscales.minCoeff() > 0) || !lengthscales.allFinite() || !(signal_sd > 0) ||
      !std::isfinite(signal_sd) || !(b > 0) || !std::isfinite(b))
    return -std::numeric_limits<double>::infinity();

  double logp = -0.5 * v.squaredNorm() - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
  if (grad) grad->head(n) = -v;

  for (Eigen::Index j = 0; j < d; ++j) {
    logp += inv_gamma_log_const(prior_.lengthscale_shape, prior_.lengthscale_scale) -
            prior_.lengthscale_shape * std::log(lengthscales[j]) -
            prior_.lengthscale_scale / lengthscales[j];
    if (grad)
      (*grad)[n + j] += -prior_.lengthscale_shape + prior_.lengthscale_scale / lengthscales[j];
  }
  const double psig = prior_.signal_sd_prior_scale;
  logp += half_normal_log_const(psig) - 0.5 * signal_sd * signal_sd / (psig * psig) +
          std::log(signal_sd);
  if (grad) (*grad)[n + d] += -signal_sd * signal_sd / (psig * psig) + 1.0;
  const double pb = prior_.b_prior_scale;
  const double bdev = b - 0.5;
  logp += truncated_normal_log_const(0.5, pb) - 0.5 * bdev * bdev / (pb * pb) + std::log(b);
  if (grad) (*grad)[n + d + 1] += -bdev * b / (pb * pb) + 1.0;

  if (n == 0) return logp;

  KernelConfig cfg;
  cfg.signal_sd = signal_sd;
  cfg.lengthscales = lengthscales;
  const Eigen::MatrixXd g_mat = gram(data_.z(), cfg);
  Eigen::MatrixXd k = g_mat;
  k.diagonal().array() += jitter_;
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd l = llt.matrixL();

  const Eigen::VectorXd log_lambda = ((l * v).array() + latent_mean_).matrix();
  if (!log_lambda.allFinite()) return -std::numeric_limits<double>::infinity();

  Eigen::VectorXd score(n);  // d loglik_i / d log lambda_i
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lambda = std::exp(log_lambda[i]);
    if (!std::isfinite(lambda)) return -std::numeric_limits<double>::infinity();
    const ncx2::Params p{lambda, b};
    const double x = lprime_safe_[i];
    logp += ncx2::logpdf(x, p);
    if (grad) {
      score[i] = ncx2::dlogpdf_dloglambda(x, p);
      (*grad)[n + d + 1] += ncx2::dlogpdf_dlogb(x, p);
    }
  }
  if (!std::isfinite(logp)) return -std::numeric_limits<double>::infinity();

  if (grad) {
    grad->head(n) += l.transpose() * score;

    // Kernel gradients through the Cholesky factor: with q = L^T score, the
    // sensitivity of sum_i phi(mu + (Lv)_i) to G is S = L^{-T} C L^{-1},
    // where C is the lower triangle of q v^T with its diagonal halved.
    const Eigen::VectorXd q = l.transpose() * score;
    Eigen::MatrixXd c = (q * v.transpose()).triangularView<Eigen::Lower>();
    c.diagonal() *= 0.5;
    const Eigen::MatrixXd x_mat = l.transpose().triangularView<Eigen::Upper>().solve(c);
    const Eigen::MatrixXd s_mat =
        l.transpose().triangularView<Eigen::Upper>().solve(x_mat.transpose()).transpose();

    for (Eigen::Index j = 0; j < d; ++j) {
      double acc = 0.0;
      const double inv_l2 = 1.0 / (lengthscales[j] * lengthscales[j]);
      for (Eigen::Index p = 0; p < n; ++p)
        for (Eigen::Index r = 0; r < n; ++r) {
          const double dz = data_.z()(p, j) - data_.z()(r, j);
          acc += s_mat(p, r) * g_mat(p, r) * dz * dz * inv_l2;
        }
      (*grad)[n + j] += acc;
    }
    (*grad)[n + d] += 2.0 * (s_mat.array() * g_mat.array()).sum();
  }
  return logp;
}

TargetDensity ChisqModel::target() const {
  const Eigen::Index n = data_.n(), d = data_.dim();
  TargetDensity t;
  t.dim = n + d + 2;
  for (Eigen::Index i = 0; i < n; ++i) t.names.push_back("latent[" + std::to_string(i + 1) + "]");
  for (Eigen::Index j = 0; j < d; ++j) t.names.push_back("lengthscale[" + std::to_string(j + 1) + "]");
  t.names.emplace_back("signal_sd");
  t.names.emplace_back("b");
  t.logp_grad = [this](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    return joint_log_posterior(u, &grad);
  };
  t.constrain = [n](const Eigen::VectorXd& u) {
    Eigen::VectorXd c = u;
    c.tail(u.size() - n) = u.tail(u.size() - n).array().exp();
    return c;
  };
  t.initial = [n, d](RngStream& rng) {
    Eigen::VectorXd u(n + d + 2);
    for (Eigen::Index i = 0; i < n; ++i) u[i] = 0.1 * rng.normal();
    for (Eigen::Index j = 0; j < d + 1; ++j) u[n + j] = 0.3 * rng.normal();
    u[n + d + 1] = std::log(0.5) + 0.3 * rng.normal();
    return u;
  };
  return t;
}

void ChisqModel::fit(const HmcConfig& config) {
  draws_ = hmc_sample(target(), config);
  fitted_ = true;
}

const PosteriorDraws& ChisqModel::draws() const {
  if (!fitted_) throw std::logic_error("model has not been fitted");
  return draws_;
}

void ChisqModel::set_draws(PosteriorDraws draws) {
  draws.validate_layout();
  if (draws.columns != target().names)
    throw std::runtime_error("draws do not match this model's parameters");
  for (Eigen::Index i = 0; i < draws.draws.rows(); ++i) split_row(draws.draws.row(i));
  draws_ = std::move(draws);
  fitted_ = true;
}

Eigen::MatrixXd ChisqModel::log_lambda_draws() const {
  const PosteriorDraws& dr = draws();
  const Eigen::Index m = dr.size(), n = data_.n();
  Eigen::MatrixXd out(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Split s = split_row(dr.draws.row(i));
    KernelConfig cfg;
    cfg.signal_sd = s.signal_sd;
    cfg.lengthscales = s.lengthscales;
    Eigen::MatrixXd k = gram(data_.z(), cfg);
    k.diagonal().array() += jitter_;
    const Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) throw std::runtime_error("gram matrix not positive definite");
    out.row(i) = ((Eigen::MatrixXd(llt.matrixL()) * s.v).array() + latent_mean_).matrix().transpose();
  }
  return out;
}

LatentPrediction ChisqModel::latent_conditional_moments(const Eigen::MatrixXd& query_raw) const {
  const PosteriorDraws& dr = draws();
  const Eigen::MatrixXd zq = data_.standardize(query_raw);
  const Eigen::Index m = dr.size(), q = zq.rows(), n = data_.n();

  LatentPrediction out;
  out.mean.resize(m, q);
  out.var.resize(m, q);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Split s = split_row(dr.draws.row(i));
    const double prior_var = s.signal_sd * s.signal_sd;
    if (n == 0) {
      out.mean.row(i).setConstant(latent_mean_);
      out.var.row(i).setConstant(prior_var);
      continue;
    }
    KernelConfig cfg;
    cfg.signal_sd = s.signal_sd;
    cfg.lengthscales = s.lengthscales;
    Eigen::MatrixXd k = gram(data_.z(), cfg);
    k.diagonal().array() += jitter_;
    const Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) throw std::runtime_error("gram matrix not positive definite");
    const Eigen::MatrixXd cross = cross_gram(data_.z(), zq, cfg);
    const Eigen::MatrixXd w = llt.matrixL().solve(cross);  // n x q
    out.mean.row(i) = ((w.transpose() * s.v).array() + latent_mean_).matrix().transpose();
    const double tol = 1e-10 * std::max(1.0, prior_var);
    for (Eigen::Index c = 0; c < q; ++c) {
      double var = prior_var - w.col(c).squaredNorm();
      if (var < -tol) throw std::runtime_error("conditional variance went negative");
      out.var(i, c) = std::max(var, 0.0);
    }
  }
  return out;
}

Eigen::MatrixXd ChisqModel::lambda_draws(const Eigen::MatrixXd& query_raw, RngStream& rng) const {
  const LatentPrediction pred = latent_conditional_moments(query_raw);
  Eigen::MatrixXd lambda(pred.mean.rows(), pred.mean.cols());
  for (Eigen::Index i = 0; i < lambda.rows(); ++i)
    for (Eigen::Index c = 0; c < lambda.cols(); ++c)
      lambda(i, c) = std::exp(pred.mean(i, c) + std::sqrt(pred.var(i, c)) * rng.normal());
  return lambda;
}

Eigen::MatrixXd ChisqModel::elpd_draws(const Eigen::MatrixXd& query_raw,
                                       const Eigen::VectorXd& a_query, RngStream& rng) const {
  if (a_query.size() != query_raw.rows())
    throw std::invalid_argument("need one offset per query point");
  const LatentPrediction pred = latent_conditional_moments(query_raw);
  const PosteriorDraws& dr = draws();
  const Eigen::Index b_col = data_.n() + data_.dim() + 1;

  Eigen::MatrixXd eta(pred.mean.rows(), pred.mean.cols());
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    const double b = dr.draws(i, b_col);
    for (Eigen::Index c = 0; c < eta.cols(); ++c) {
      const double lambda = std::exp(pred.mean(i, c) + std::sqrt(pred.var(i, c)) * rng.normal());
      eta(i, c) = a_query[c] - b * (1.0 + lambda);
    }
  }
  return eta;
}

}  // namespace lpa
