#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pacrank/data.hpp"
#include "pacrank/ep_common.hpp"
#include "pacrank/risk.hpp"
#include "pacrank/targets.hpp"

namespace pacrank::ep {

/// Gaussian approximation N(mean, cov) over the score direction theta.
struct GaussianApprox {
  Vector mean;
  Matrix cov;
  double log_evidence = 0;
};

/// Pair-site EP state for linear scores. The base factor is a diagonal
/// Gaussian exp(-theta' diag(base_prec) theta / 2 + base_shift' theta): the
/// prior for the Gaussian model, the coordinate sites for spike-and-slab.
class LinearPairModel {
 public:
  LinearPairModel(const LabeledDataset& ds, Vector base_prec, Vector base_shift)
      : base_prec_(std::move(base_prec)), base_shift_(std::move(base_shift)) {
    require_both_classes(ds);
    const auto d = static_cast<Eigen::Index>(ds.d());
    xp_.resize(static_cast<Eigen::Index>(ds.n_pos()), d);
    xn_.resize(static_cast<Eigen::Index>(ds.n_neg()), d);
    for (std::size_t i = 0; i < ds.n_pos(); ++i) xp_.row(static_cast<Eigen::Index>(i)) = ds.features.row(ds.pos_idx[i]);
    for (std::size_t j = 0; j < ds.n_neg(); ++j) xn_.row(static_cast<Eigen::Index>(j)) = ds.features.row(ds.neg_idx[j]);
    degenerate_.clear();
    for (Eigen::Index j = 0; j < xn_.rows(); ++j)
      for (Eigen::Index i = 0; i < xp_.rows(); ++i)
        if ((xp_.row(i) - xn_.row(j)).squaredNorm() == 0) degenerate_.emplace_back(i, j);
  }

  const Matrix& pos_features() const { return xp_; }
  const Matrix& neg_features() const { return xn_; }

  /// Pairs whose direction is zero: their factor is the constant exp(-g).
  void seed_degenerate(PairSites& sites, double g) const {
    for (auto [i, j] : degenerate_) sites.logC(i, j) = -g;
  }

  void set_base(Vector prec, Vector shift) {
    base_prec_ = std::move(prec);
    base_shift_ = std::move(shift);
  }
  const Vector& base_prec() const { return base_prec_; }
  const Vector& base_shift() const { return base_shift_; }

  /// Global precision and shift from the base factor plus every pair site.
  std::pair<Matrix, Vector> natural_parameters(const PairSites& sites) const {
    const Vector row_k = sites.K.rowwise().sum();
    const Vector col_k = sites.K.colwise().sum().transpose();
    Matrix cross = xp_.transpose() * sites.K * xn_;
    Matrix prec = xp_.transpose() * row_k.asDiagonal() * xp_ + xn_.transpose() * col_k.asDiagonal() * xn_ - cross -
                  cross.transpose();
    prec.diagonal() += base_prec_;
    Vector shift = xp_.transpose() * sites.H.rowwise().sum() - xn_.transpose() * sites.H.colwise().sum().transpose() +
                   base_shift_;
    return {std::move(prec), std::move(shift)};
  }

  bool assemble(const PairSites& sites) {
    auto [prec, shift] = natural_parameters(sites);
    Eigen::LLT<Matrix> llt(prec);
    if (llt.info() != Eigen::Success) return false;
    const Matrix L = llt.matrixL();
    if ((L.diagonal().array() <= 0).any() || !L.allFinite()) return false;
    const auto d = prec.rows();
    Matrix cov = llt.solve(Matrix::Identity(d, d));
    cov = 0.5 * (cov + cov.transpose());
    prec_ = std::move(prec);
    shift_ = std::move(shift);
    cov_ = std::move(cov);
    mean_ = llt.solve(shift_);
    log_det_prec_ = 2.0 * L.diagonal().array().log().sum();
    return true;
  }

  /// Marginal mean and variance of t = (x_pos - x_neg)' theta for every pair.
  void marginals(Matrix& mm, Matrix& mv) const {
    const Vector mu_p = xp_ * mean_;
    const Vector mu_n = xn_ * mean_;
    const Matrix xvp = xp_ * cov_;
    const Vector qp = (xvp.array() * xp_.array()).rowwise().sum();
    const Vector qn = ((xn_ * cov_).array() * xn_.array()).rowwise().sum();
    mm = mu_p.replicate(1, xn_.rows()) - mu_n.transpose().replicate(xp_.rows(), 1);
    mv = (xvp * xn_.transpose() * -2.0).colwise() + qp;
    mv.rowwise() += qn.transpose();
    for (auto [i, j] : degenerate_) mv(i, j) = 0;
  }

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  const Matrix& precision() const { return prec_; }
  const Vector& shift() const { return shift_; }
  double log_det_precision() const { return log_det_prec_; }

 private:
  Matrix xp_, xn_;
  Vector base_prec_, base_shift_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> degenerate_;
  Matrix prec_, cov_;
  Vector shift_, mean_;
  double log_det_prec_ = 0;
};

struct EpFit {
  GaussianApprox approx;
  PairSites sites;
  EpDiagnostics diagnostics;
  double gamma = 0;
  double prior_variance = 0;

  Vector scores(const Matrix& x) const { return x * approx.mean; }
};

/// Cavity along direction `a` with site (K, h) divided out of `approx`. O(d^2).
inline std::optional<Cavity> cavity_moments(const GaussianApprox& approx, double site_k, double site_h,
                                            const Vector& a) {
  const double m_t = a.dot(approx.mean);
  const double v_t = a.dot(approx.cov * a);
  return cavity_from_marginal(m_t, v_t, site_k, site_h);
}

namespace detail {

inline double gaussian_log_evidence(const LinearPairModel& model, const PairSites& sites, double g,
                                    double prior_variance) {
  if (g == 0.0) return 0.0;  // no tilt: the integrand is the normalized prior
  Matrix mm, mv;
  model.marginals(mm, mv);
  const double d = static_cast<double>(model.mean().size());
  const double sites_term = pair_sites_log_constant(mm, mv, sites, g);
  // log int N(theta; 0, prior) prod q_ij = -log|Sigma|/2 - log|P|/2 + b'm/2
  const double global =
      -0.5 * d * std::log(prior_variance) - 0.5 * model.log_det_precision() + 0.5 * model.shift().dot(model.mean());
  return sites_term + global;
}

inline LinearPairModel gaussian_model(const LabeledDataset& ds, const GaussianPrior& prior) {
  const auto d = static_cast<Eigen::Index>(ds.d());
  return LinearPairModel(ds, Vector::Constant(d, 1.0 / prior.variance), Vector::Zero(d));
}

}  // namespace detail

/// Damped parallel EP for the Gaussian prior. Sites start at zero unless
/// `warm_start` is given; sweep order is lexicographic in (positive, negative).
inline EpFit ep_fit(const LabeledDataset& ds, const GaussianPrior& prior, const EpConfig& cfg,
                    const PairSites* warm_start = nullptr) {
  cfg.validate();
  prior.validate();
  require_both_classes(ds);
  const double g = pair_temperature(cfg.gamma, ds);
  LinearPairModel model = detail::gaussian_model(ds, prior);
  PairSites sites = warm_start ? *warm_start : PairSites::zeros(ds.n_pos(), ds.n_neg());
  model.seed_degenerate(sites, g);
  if (!model.assemble(sites)) throw NumericalError("initial EP approximation is not positive definite");

  EpFit fit;
  fit.diagnostics = run_parallel_pair_ep(
      sites, g, cfg, [&](Matrix& mm, Matrix& mv) { model.marginals(mm, mv); },
      [&](const PairSites& cand) { return model.assemble(cand); });
  fit.gamma = cfg.gamma;
  fit.prior_variance = prior.variance;
  fit.approx.mean = model.mean();
  fit.approx.cov = model.cov();
  fit.approx.log_evidence = detail::gaussian_log_evidence(model, sites, g, prior.variance);
  fit.sites = std::move(sites);
  return fit;
}

/// EP estimate of log Z: site constants plus the closed-form Gaussian integral.
inline double ep_log_evidence(const EpFit& fit, const LabeledDataset& ds) {
  LinearPairModel model = detail::gaussian_model(ds, GaussianPrior{fit.prior_variance});
  if (!model.assemble(fit.sites)) throw NumericalError("stored EP sites are not positive definite");
  return detail::gaussian_log_evidence(model, fit.sites, pair_temperature(fit.gamma, ds), fit.prior_variance);
}

// ---------------------------------------------------------------------------
// Leave-one-out scores from site deflation

struct LooResult {
  EpFit fit;
  Vector scores;               // held-out score of every point, dataset order
  std::vector<bool> fallback;  // deflation was not positive definite
  double auc = 0;
  double training_auc = 0;
};

/// Held-out scores without refitting: for point i all sites touching i are
/// divided out of the global approximation and x_i is scored under the
/// deflated mean.
inline LooResult loo_cv_score(const LabeledDataset& ds, const GaussianPrior& prior, const EpConfig& cfg) {
  LooResult out;
  out.fit = ep_fit(ds, prior, cfg);
  LinearPairModel model = detail::gaussian_model(ds, prior);
  if (!model.assemble(out.fit.sites)) throw NumericalError("fitted sites are not positive definite");
  const Matrix& xp = model.pos_features();
  const Matrix& xn = model.neg_features();
  const Matrix& K = out.fit.sites.K;
  const Matrix& H = out.fit.sites.H;
  const Matrix& P = model.precision();
  const Vector& b = model.shift();

  out.scores.resize(static_cast<Eigen::Index>(ds.n()));
  out.fallback.assign(ds.n(), false);

  // removal of sum_j K_ij (x - y_j)(x - y_j)' and sum_j h_ij (x - y_j), with
  // `others` holding the opposite-class rows and `sign` the pair orientation
  auto deflate = [&](const Vector& x, const Matrix& others, const Vector& k_row, const Vector& h_row, double sign,
                     std::size_t idx) {
    const double ksum = k_row.sum();
    const Vector ky = others.transpose() * k_row;
    Matrix removal = ksum * x * x.transpose() - x * ky.transpose() - ky * x.transpose() +
                     others.transpose() * k_row.asDiagonal() * others;
    const Vector shift_removal = sign * (h_row.sum() * x - others.transpose() * h_row);
    const Matrix Pi = P - removal;
    Eigen::LLT<Matrix> llt(Pi);
    if (llt.info() != Eigen::Success) {
      out.fallback[idx] = true;
      out.scores(static_cast<Eigen::Index>(idx)) = x.dot(model.mean());
      return;
    }
    out.scores(static_cast<Eigen::Index>(idx)) = x.dot(llt.solve(b - shift_removal));
  };

  for (std::size_t i = 0; i < ds.n_pos(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    deflate(xp.row(r).transpose(), xn, K.row(r).transpose(), H.row(r).transpose(), 1.0, ds.pos_idx[i]);
  }
  for (std::size_t j = 0; j < ds.n_neg(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    // direction is x_pos - x_neg, so the shift enters with the opposite sign
    deflate(xn.row(c).transpose(), xp, K.col(c), H.col(c), -1.0, ds.neg_idx[j]);
  }
  out.auc = auc(out.scores, ds.labels);
  out.training_auc = auc(out.fit.scores(ds.features), ds.labels);
  return out;
}

}  // namespace pacrank::ep
