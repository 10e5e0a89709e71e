#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pacrank/data.hpp"
#include "pacrank/ep_common.hpp"
#include "pacrank/normal.hpp"
#include "pacrank/risk.hpp"

namespace pacrank::gp {

/// k(x, x') = signal_variance * exp(-|x - x'|^2 / (2 lengthscale^2)), plus
/// jitter on the diagonal of training Gram matrices.
struct SqExpKernel {
  double signal_variance = 1.0;
  double lengthscale = 1.0;
  double jitter = 1e-6;

  static SqExpKernel with_default_jitter(double signal_variance, double lengthscale) {
    return {signal_variance, lengthscale, 1e-6 * signal_variance};
  }

  void validate() const {
    if (!(signal_variance > 0) || !(lengthscale > 0) || !(jitter > 0))
      throw UsageError("kernel signal variance, lengthscale and jitter must all be positive");
  }

  double operator()(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const {
    return signal_variance * std::exp(-0.5 * (a - b).squaredNorm() / (lengthscale * lengthscale));
  }
};

/// Kernel values between rows of `a` and rows of `b` (no jitter).
inline Matrix cross_gram(const Matrix& a, const Matrix& b, const SqExpKernel& k) {
  if (a.cols() != b.cols())
    throw DataError("dimension mismatch: " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) +
                    " features");
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * a * b.transpose()).colwise() + na;
  d2.rowwise() += nb.transpose();
  d2 = d2.cwiseMax(0.0);
  return k.signal_variance * (-0.5 / (k.lengthscale * k.lengthscale) * d2.array()).exp().matrix();
}

inline Matrix gram(const Matrix& x, const SqExpKernel& k) {
  k.validate();
  Matrix g = cross_gram(x, x, k);
  g = 0.5 * (g + g.transpose());
  g.diagonal().setConstant(k.signal_variance + k.jitter);
  return g;
}

struct GpPosterior {
  Matrix train_x;
  SqExpKernel kernel;
  Vector mean;   // posterior mean of s_{1:n}
  Matrix cov;    // posterior covariance of s_{1:n}
  Vector alpha;  // K^{-1} mean, for prediction
  double log_evidence = 0;
  double gamma = 0;
  ep::PairSites sites;
  ep::EpDiagnostics diagnostics;
};

/// EP state over the latent score vector s with prior N(0, K). Pair sites act
/// on s_pos - s_neg, so a cavity only needs three entries of the covariance.
class GpPairModel {
 public:
  GpPairModel(const LabeledDataset& ds, Matrix k) : pos_(ds.pos_idx), neg_(ds.neg_idx), k_(std::move(k)) {}

  bool assemble(const ep::PairSites& sites) {
    const auto n = k_.rows();
    Matrix lap = Matrix::Zero(n, n);
    Vector b = Vector::Zero(n);
    for (std::size_t i = 0; i < pos_.size(); ++i) {
      const auto p = static_cast<Eigen::Index>(pos_[i]);
      for (std::size_t j = 0; j < neg_.size(); ++j) {
        const auto q = static_cast<Eigen::Index>(neg_[j]);
        const double kij = sites.K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        const double hij = sites.H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        lap(p, p) += kij;
        lap(q, q) += kij;
        lap(p, q) -= kij;
        lap(q, p) -= kij;
        b(p) += hij;
        b(q) -= hij;
      }
    }
    // V = (K^{-1} + L)^{-1} = (I + K L)^{-1} K
    Matrix a = Matrix::Identity(n, n) + k_ * lap;
    Eigen::PartialPivLU<Matrix> lu(a);
    Matrix v = lu.solve(k_);
    v = 0.5 * (v + v.transpose());
    if (!v.allFinite()) return false;
    Eigen::LLT<Matrix> llt(v);
    if (llt.info() != Eigen::Success) return false;
    const Vector udiag = lu.matrixLU().diagonal();
    double sign = lu.permutationP().determinant();
    double log_det = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (udiag(i) < 0) sign = -sign;
      log_det += std::log(std::abs(udiag(i)));
    }
    if (!(sign > 0) || !std::isfinite(log_det)) return false;
    cov_ = std::move(v);
    mean_ = cov_ * b;
    alpha_ = b - lap * mean_;
    shift_ = std::move(b);
    log_det_a_ = log_det;
    return true;
  }

  void marginals(Matrix& mm, Matrix& mv) const {
    const auto np = static_cast<Eigen::Index>(pos_.size());
    const auto nq = static_cast<Eigen::Index>(neg_.size());
    mm.resize(np, nq);
    mv.resize(np, nq);
    for (Eigen::Index j = 0; j < nq; ++j) {
      const auto q = static_cast<Eigen::Index>(neg_[static_cast<std::size_t>(j)]);
      for (Eigen::Index i = 0; i < np; ++i) {
        const auto p = static_cast<Eigen::Index>(pos_[static_cast<std::size_t>(i)]);
        mm(i, j) = mean_(p) - mean_(q);
        mv(i, j) = cov_(p, p) + cov_(q, q) - 2.0 * cov_(p, q);
      }
    }
  }

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  const Vector& alpha() const { return alpha_; }
  const Vector& shift() const { return shift_; }
  double log_det_a() const { return log_det_a_; }

 private:
  std::vector<std::size_t> pos_, neg_;
  Matrix k_;
  Matrix cov_;
  Vector mean_, alpha_, shift_;
  double log_det_a_ = 0;
};

/// EP over s_{1:n} under a GP prior; one site per (positive, negative) pair.
inline GpPosterior gp_ep_fit(const LabeledDataset& ds, const SqExpKernel& kernel, const ep::EpConfig& cfg) {
  cfg.validate();
  kernel.validate();
  require_both_classes(ds);
  const double g = ep::pair_temperature(cfg.gamma, ds);
  GpPairModel model(ds, gram(ds.features, kernel));
  ep::PairSites sites = ep::PairSites::zeros(ds.n_pos(), ds.n_neg());
  if (!model.assemble(sites)) throw NumericalError("GP prior covariance is not positive definite; raise the jitter");

  GpPosterior post;
  post.diagnostics = ep::run_parallel_pair_ep(
      sites, g, cfg, [&](Matrix& mm, Matrix& mv) { model.marginals(mm, mv); },
      [&](const ep::PairSites& cand) { return model.assemble(cand); });

  Matrix mm, mv;
  model.marginals(mm, mv);
  // log int N(s; 0, K) prod q_ij ds = -log|I + K L|/2 + b'm/2
  post.log_evidence =
      ep::pair_sites_log_constant(mm, mv, sites, g) - 0.5 * model.log_det_a() + 0.5 * model.shift().dot(model.mean());
  post.train_x = ds.features;
  post.kernel = kernel;
  post.mean = model.mean();
  post.cov = model.cov();
  post.alpha = model.alpha();
  post.gamma = cfg.gamma;
  post.sites = std::move(sites);
  return post;
}

/// Posterior-mean conditional k(x*, X) K^{-1} m.
inline Vector gp_predict(const Matrix& train_x, const SqExpKernel& kernel, const Vector& alpha, const Matrix& x_new) {
  if (x_new.cols() != train_x.cols())
    throw DataError("feature count mismatch: model expects " + std::to_string(train_x.cols()) + ", got " +
                    std::to_string(x_new.cols()));
  return cross_gram(x_new, train_x, kernel) * alpha;
}

inline Vector gp_predict(const GpPosterior& post, const Matrix& x_new) {
  return gp_predict(post.train_x, post.kernel, post.alpha, x_new);
}

/// Gibbs target over s_{1:n} for the SMC sampler: N(0, K) prior and the
/// misrank loss of s itself.
struct GpGibbsTarget {
  const LabeledDataset* data = nullptr;
  Matrix chol;  // lower factor of K
  double log_det_k = 0;
  double gamma = 0;

  GpGibbsTarget(const LabeledDataset& ds, const SqExpKernel& kernel, double g = 0) : data(&ds), gamma(g) {
    require_both_classes(ds);
    Eigen::LLT<Matrix> llt(gram(ds.features, kernel));
    if (llt.info() != Eigen::Success) throw NumericalError("GP Gram matrix is not positive definite");
    chol = llt.matrixL();
    log_det_k = 2.0 * chol.diagonal().array().log().sum();
  }

  std::size_t dim() const { return data->n(); }

  double log_prior(const Vector& s) const {
    const Vector z = chol.triangularView<Eigen::Lower>().solve(s);
    return -0.5 * z.squaredNorm() - 0.5 * log_det_k - static_cast<double>(s.size()) * normal::kLogSqrt2Pi;
  }

  double loss(const Vector& s) const { return misrank_loss(s, *data); }

  template <class Rng>
  Vector sample_prior(Rng& rng) const {
    std::normal_distribution<double> z;
    Vector e(chol.rows());
    for (auto& v : e) v = z(rng);
    return chol * e;
  }
};

/// Median pairwise distance, an alternative lengthscale heuristic.
inline double median_distance(const Matrix& x) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) d.push_back((x.row(i) - x.row(j)).norm());
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + static_cast<long>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

}  // namespace pacrank::gp
