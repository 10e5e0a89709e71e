#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pacrank/data.hpp"
#include "pacrank/errors.hpp"
#include "pacrank/targets.hpp"

namespace pacrank::smc {

struct SmcConfig {
  std::size_t particles = 1000;
  double ess_tau = 0.5;
  std::optional<double> kappa;  // random-walk scale; default 2.38^2 / dim
  double gamma_max = 1.0;
  int move_steps = 3;
  std::uint64_t seed = 0;
  bool keep_history = false;  // snapshot particles at every ladder point

  void validate() const {
    if (particles < 2) throw UsageError("SMC needs at least 2 particles");
    if (!(ess_tau > 0 && ess_tau < 1)) throw UsageError("ESS threshold must lie in (0,1)");
    if (kappa && !(*kappa > 0)) throw UsageError("random-walk scale kappa must be positive");
    if (!(gamma_max >= 0) || !std::isfinite(gamma_max)) throw UsageError("gamma_max must be finite and >= 0");
    if (move_steps < 0) throw UsageError("move_steps must be >= 0");
  }
};

/// Particle cloud at one ladder temperature. Weights are uniform except at
/// the terminal temperature, which is reached by reweighting only.
struct Snapshot {
  double gamma = 0;
  double log_evidence = 0;
  Matrix particles;    // N x dim
  Vector losses;       // misrank loss per particle
  Vector log_weights;  // unnormalized
};

struct EvidencePoint {
  double gamma;
  double log_z;
};

struct ParticleSystem {
  Matrix particles;  // N x dim, final temperature
  Vector losses;
  Vector weights;    // normalized, final temperature
  double gamma = 0;
  std::vector<double> ladder;
  std::vector<EvidencePoint> evidence_path;  // log Z_t for every ladder point
  std::vector<double> acceptance;            // mean RW acceptance per move stage
  std::vector<Snapshot> history;             // filled when keep_history
  std::uint64_t seed = 0;

  double log_evidence() const { return evidence_path.back().log_z; }
  double evidence() const { return std::exp(log_evidence()); }

  Vector mean() const { return particles.transpose() * weights; }

  Matrix covariance() const {
    const Vector mu = mean();
    Matrix centered = particles.rowwise() - mu.transpose();
    return centered.transpose() * weights.asDiagonal() * centered;
  }

  Vector sd() const { return covariance().diagonal().cwiseSqrt(); }

  /// Effective sample size of the final weights.
  double ess() const { return 1.0 / weights.squaredNorm(); }

  // Reweighting from the closest lower ladder snapshot, so any gamma up to
  // gamma_max gets a weighted cloud from a single run.
  const Snapshot& snapshot_below(double g) const {
    if (history.empty()) throw UsageError("particle history not kept; rerun with keep_history");
    if (g > history.back().gamma * (1 + 1e-12) + 1e-300)
      throw UsageError("requested gamma " + std::to_string(g) + " beyond the ladder end");
    std::size_t t = 0;
    while (t + 1 < history.size() && history[t + 1].gamma <= g) ++t;
    return history[t];
  }

  Vector normalized_weights_at(double g, const Snapshot** snap_out = nullptr) const {
    const Snapshot& s = snapshot_below(g);
    Vector lw = s.log_weights.array() - (g - s.gamma) * s.losses.array();
    lw.array() -= lw.maxCoeff();
    Vector w = lw.array().exp();
    w /= w.sum();
    if (snap_out) *snap_out = &s;
    return w;
  }

  Vector mean_at(double g) const {
    const Snapshot* s = nullptr;
    Vector w = normalized_weights_at(g, &s);
    return s->particles.transpose() * w;
  }

  double log_evidence_at(double g) const {
    const Snapshot& s = snapshot_below(g);
    // log Z(g) = log Z_t + log sum_i W_i exp(-(g - g_t) loss_i)
    Vector lw = s.log_weights;
    const double lmax = lw.maxCoeff();
    const double norm = std::log((lw.array() - lmax).exp().sum()) + lmax;
    Vector inc = lw.array() - norm - (g - s.gamma) * s.losses.array();
    const double m = inc.maxCoeff();
    return s.log_evidence + m + std::log((inc.array() - m).exp().sum());
  }
};

// ---------------------------------------------------------------------------

/// ESS of weights exp(-delta * loss).
inline double ess_for_increment(const Vector& losses, double min_loss, double delta) {
  double s = 0, s2 = 0;
  for (Eigen::Index i = 0; i < losses.size(); ++i) {
    const double w = std::exp(-delta * (losses(i) - min_loss));
    s += w;
    s2 += w * w;
  }
  return s * s / s2;
}

/// Next temperature: solves ESS(gamma) = tau*N by bisection on
/// (gamma_prev + eps, gamma_max]; returns gamma_max when even the full
/// increment keeps ESS >= tau*N.
inline double next_temperature(const Vector& losses, double gamma_prev, double tau, std::size_t n,
                               double gamma_max) {
  constexpr double kEps = 1e-12;
  if (!(gamma_prev < gamma_max)) return gamma_max;
  if (!losses.allFinite()) throw NumericalError("non-finite loss in temperature solve");
  const double target = tau * static_cast<double>(n);
  const double min_loss = losses.minCoeff();
  double hi = gamma_max - gamma_prev;
  if (ess_for_increment(losses, min_loss, hi) >= target) return gamma_max;
  double lo = std::min(kEps, hi);
  if (ess_for_increment(losses, min_loss, lo) <= target) return gamma_prev + lo;
  // lo keeps ESS > target, hi keeps ESS < target
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double e = ess_for_increment(losses, min_loss, mid);
    if (e > target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  return gamma_prev + lo;
}

/// Systematic resampling. Returns 0-based ancestor indices.
inline std::vector<std::size_t> systematic_resample(const Vector& weights, double u) {
  const auto n = static_cast<std::size_t>(weights.size());
  if (n == 0) throw UsageError("cannot resample an empty weight vector");
  if ((weights.array() < 0).any()) throw UsageError("negative weight in resampling");
  if (!(u >= 0 && u < 1)) throw UsageError("resampling uniform must lie in [0,1)");
  if (std::abs(weights.sum() - 1.0) > 1e-9) throw UsageError("resampling weights must sum to 1");
  std::vector<double> cum(n);
  double acc = 0;
  for (std::size_t m = 0; m < n; ++m) {
    acc += static_cast<double>(n) * weights(static_cast<Eigen::Index>(m));
    cum[m] = acc;
  }
  std::vector<std::size_t> out(n);
  double s = u;
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (m + 1 < n && cum[m] < s) ++m;
    out[i] = m;
    s += 1.0;
  }
  return out;
}

struct MetropolisResult {
  Vector theta;
  bool accepted;
};

/// One Gaussian random-walk Metropolis step at the target's temperature.
/// `chol_lower` is a lower Cholesky factor of the proposal covariance S.
template <class Target, class Rng>
MetropolisResult rw_metropolis_step(const Target& target, const Vector& theta, const Matrix& chol_lower,
                                    Rng& rng) {
  std::normal_distribution<double> z;
  Vector noise(theta.size());
  for (auto& v : noise) v = z(rng);
  Vector prop = theta + chol_lower * noise;
  const double log_u = std::log(std::generate_canonical<double, 53>(rng));
  const double ratio = log_pseudo_posterior_unnorm(target, prop) - log_pseudo_posterior_unnorm(target, theta);
  if (log_u <= ratio) return {std::move(prop), true};
  return {theta, false};
}

/// Cholesky factor of kappa * Sigma_hat, regularized by 1e-9 * trace/dim.
inline Matrix proposal_factor(const Matrix& particles, double kappa) {
  const auto dim = particles.cols();
  const Vector mu = particles.colwise().mean();
  Matrix centered = particles.rowwise() - mu.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(particles.rows() - 1, 1));
  Matrix s = kappa * cov;
  const double tr = s.trace();
  s.diagonal().array() += (tr > 0 ? 1e-9 * tr / static_cast<double>(dim) : 1e-12);
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  // numerically indefinite: fall back to the diagonal
  return s.diagonal().cwiseMax(0).cwiseSqrt().asDiagonal();
}

/// Adaptive tempering SMC from the prior (gamma = 0) to cfg.gamma_max.
///
/// `Target` must expose dim(), sample_prior(rng), log_prior(theta), loss(theta)
/// and a mutable `gamma`. The evidence increment is applied exactly once per
/// ladder step, including the terminal step clamped to gamma_max; the terminal
/// step is reweighting only, so the final cloud carries weights.
template <class Target>
ParticleSystem run_tempering_smc(Target target, const SmcConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.particles;
  const auto dim = static_cast<Eigen::Index>(target.dim());
  const double kappa = cfg.kappa.value_or(2.38 * 2.38 / static_cast<double>(dim));
  std::mt19937_64 rng(cfg.seed);

  ParticleSystem ps;
  ps.seed = cfg.seed;
  ps.particles.resize(static_cast<Eigen::Index>(n), dim);
  ps.losses.resize(static_cast<Eigen::Index>(n));
  Vector log_prior(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    ps.particles.row(r) = target.sample_prior(rng).transpose();
    if (!ps.particles.row(r).allFinite()) throw NumericalError("prior sampling produced a non-finite draw");
    ps.losses(r) = target.loss(ps.particles.row(r).transpose());
    log_prior(r) = target.log_prior(ps.particles.row(r).transpose());
  }
  if (!ps.losses.allFinite()) throw NumericalError("non-finite loss at initialization");

  double gamma = 0, log_z = 0;
  ps.ladder.push_back(0.0);
  ps.evidence_path.push_back({0.0, 0.0});
  auto snapshot = [&](const Vector& lw) {
    if (cfg.keep_history) ps.history.push_back({gamma, log_z, ps.particles, ps.losses, lw});
  };
  const Vector zero_lw = Vector::Zero(static_cast<Eigen::Index>(n));

  snapshot(zero_lw);
  if (cfg.gamma_max <= 0) {
    ps.weights = Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
    return ps;
  }

  std::normal_distribution<double> normal01;
  Vector noise(dim), prop(dim);
  while (true) {
    const double next = next_temperature(ps.losses, gamma, cfg.ess_tau, n, cfg.gamma_max);
    const double delta = next - gamma;
    Vector lw = -delta * ps.losses;
    const double lmax = lw.maxCoeff();
    Vector w = (lw.array() - lmax).exp();
    const double sum_w = w.sum();
    log_z += lmax + std::log(sum_w / static_cast<double>(n));
    gamma = next;
    ps.ladder.push_back(gamma);
    ps.evidence_path.push_back({gamma, log_z});
    w /= sum_w;

    if (gamma >= cfg.gamma_max) {
      ps.weights = w;
      ps.gamma = gamma;
      snapshot(Vector(w.array().log()));
      return ps;
    }

    // resample
    const auto anc = systematic_resample(w, std::generate_canonical<double, 53>(rng));
    Matrix resampled(static_cast<Eigen::Index>(n), dim);
    Vector res_loss(static_cast<Eigen::Index>(n)), res_lp(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = static_cast<Eigen::Index>(anc[i]);
      resampled.row(static_cast<Eigen::Index>(i)) = ps.particles.row(a);
      res_loss(static_cast<Eigen::Index>(i)) = ps.losses(a);
      res_lp(static_cast<Eigen::Index>(i)) = log_prior(a);
    }
    ps.particles = std::move(resampled);
    ps.losses = std::move(res_loss);
    log_prior = std::move(res_lp);

    // move
    const Matrix chol = proposal_factor(ps.particles, kappa);
    std::size_t accepted = 0;
    for (int step = 0; step < cfg.move_steps; ++step) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (Eigen::Index k = 0; k < dim; ++k) noise(k) = normal01(rng);
        prop = ps.particles.row(r).transpose() + chol * noise;
        const double lp_prop = target.log_prior(prop);
        const double log_u = std::log(std::generate_canonical<double, 53>(rng));
        if (lp_prop == -INFINITY) continue;
        const double loss_prop = target.loss(prop);
        if (!std::isfinite(loss_prop)) throw NumericalError("non-finite loss during move step");
        const double ratio = (lp_prop - gamma * loss_prop) - (log_prior(r) - gamma * ps.losses(r));
        if (log_u <= ratio) {
          ps.particles.row(r) = prop.transpose();
          ps.losses(r) = loss_prop;
          log_prior(r) = lp_prop;
          ++accepted;
        }
      }
    }
    ps.acceptance.push_back(cfg.move_steps > 0 ? static_cast<double>(accepted) /
                                                     static_cast<double>(n * static_cast<std::size_t>(cfg.move_steps))
                                               : 0.0);
    snapshot(zero_lw);
  }
}

}  // namespace pacrank::smc
