#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pacrank/data.hpp"
#include "pacrank/errors.hpp"
#include "pacrank/normal.hpp"

namespace pacrank::ep {

struct EpConfig {
  double gamma = 0.0;
  double damping = 0.8;
  int max_sweeps = 200;
  double tolerance = 1e-6;  // on the largest natural-parameter change

  void validate() const {
    if (!(gamma >= 0) || std::isnan(gamma)) throw UsageError("gamma must be >= 0");
    if (!(damping > 0 && damping <= 1)) throw UsageError("damping must lie in (0,1]");
    if (max_sweeps < 1) throw UsageError("max_sweeps must be >= 1");
    if (!(tolerance > 0)) throw UsageError("tolerance must be positive");
  }
};

/// Per-pair temperature gamma / (n_pos * n_neg).
inline double pair_temperature(double gamma, const LabeledDataset& ds) {
  return gamma / static_cast<double>(ds.n_pairs());
}

struct TiltedMoments {
  double log_z;
  double mean;
  double var;
};

namespace detail {

// phi(a) / Phi(a), with an asymptotic series once Phi underflows.
inline double inverse_mills(double a) {
  if (a > -30) return normal::pdf(a) / normal::cdf(a);
  const double a2 = a * a;
  return -a / (1 - 1 / a2 + 3 / (a2 * a2) - 15 / (a2 * a2 * a2));
}

}  // namespace detail

/// Moments of N(t; m, v) * [exp(-g) 1{t<0} + 1{t>=0}], normalized.
///
/// Z = exp(-g) + (1 - exp(-g)) Phi(a), a = m / sqrt(v); the mean and variance
/// come from the first two derivatives of log Z in m. `g` may be +inf.
inline TiltedMoments tilted_step_gaussian_moments(double m_cav, double v_cav, double g) {
  if (!(v_cav > 0)) throw NumericalError("tilted moments need a positive cavity variance");
  if (g == 0) return {0.0, m_cav, v_cav};
  const double sd = std::sqrt(v_cav);
  const double a = m_cav / sd;
  const double floor_w = std::exp(-g);
  const double c = -std::expm1(-g);
  const double phi_cdf = normal::cdf(a);
  const double z = floor_w + c * phi_cdf;

  double r;  // = sqrt(v) * dlogZ/dm
  double log_z;
  if (z > 0 && (phi_cdf > 0 || floor_w > 0)) {
    r = c * normal::pdf(a) / z;
    log_z = std::log(z);
  } else {
    r = detail::inverse_mills(a);
    log_z = std::log(0.5) + std::log(std::erfc(-a / std::numbers::sqrt2));
    if (!std::isfinite(log_z)) log_z = -0.5 * a * a - std::log(-a) - normal::kLogSqrt2Pi;
  }
  const double mean = m_cav + sd * r;
  double var = v_cav * (1.0 - r * (a + r));
  var = std::max(var, 1e-300);
  return {log_z, mean, var};
}

/// Cavity along a site direction, from the marginal (m_t, v_t) and the site
/// naturals (K, h). Empty when the cavity variance is not positive.
struct Cavity {
  double mean;
  double var;
};

inline std::optional<Cavity> cavity_from_marginal(double m_t, double v_t, double site_k, double site_h) {
  const double lambda = 1.0 / v_t - site_k;
  if (!(lambda > 0) || !std::isfinite(lambda)) return std::nullopt;
  const double v = 1.0 / lambda;
  return Cavity{v * (m_t / v_t - site_h), v};
}

/// log C such that C * int N(t; cavity) exp(-K t^2/2 + h t) dt = exp(log_z).
inline double site_log_constant(double log_z, const Cavity& cav, double site_k, double site_h) {
  const double lc = 1.0 / cav.var;
  const double ec = cav.mean / cav.var;
  const double l = lc + site_k;
  const double e = ec + site_h;
  const double log_int = 0.5 * e * e / l - 0.5 * ec * ec / lc + 0.5 * std::log(lc / l);
  return log_z - log_int;
}

/// One 1-D site per (positive, negative) pair; row = positive rank, column =
/// negative rank within the dataset's sorted index lists.
struct PairSites {
  Matrix K;     // natural precision
  Matrix H;     // natural shift
  Matrix logC;  // site normalization

  static PairSites zeros(std::size_t n_pos, std::size_t n_neg) {
    const auto p = static_cast<Eigen::Index>(n_pos);
    const auto q = static_cast<Eigen::Index>(n_neg);
    return {Matrix::Zero(p, q), Matrix::Zero(p, q), Matrix::Zero(p, q)};
  }
};

struct PairUpdate {
  Matrix K, H, logC;
  std::size_t skipped = 0;
};

/// Moment-matching proposals for every pair site from the pair marginals.
/// Skipped sites keep their current parameters.
inline PairUpdate propose_pair_sites(const Matrix& marg_mean, const Matrix& marg_var, const PairSites& sites,
                                     double g) {
  PairUpdate up{sites.K, sites.H, sites.logC, 0};
  for (Eigen::Index j = 0; j < marg_mean.cols(); ++j) {
    for (Eigen::Index i = 0; i < marg_mean.rows(); ++i) {
      auto cav = cavity_from_marginal(marg_mean(i, j), marg_var(i, j), sites.K(i, j), sites.H(i, j));
      if (!cav) {
        ++up.skipped;
        continue;
      }
      const TiltedMoments t = tilted_step_gaussian_moments(cav->mean, cav->var, g);
      const double k_new = 1.0 / t.var - 1.0 / cav->var;
      const double h_new = t.mean / t.var - cav->mean / cav->var;
      if (!std::isfinite(k_new) || !std::isfinite(h_new)) {
        ++up.skipped;
        continue;
      }
      up.K(i, j) = k_new;
      up.H(i, j) = h_new;
      up.logC(i, j) = site_log_constant(t.log_z, *cav, k_new, h_new);
    }
  }
  return up;
}

/// Sum of log C over pair sites, recomputed from the current marginals.
inline double pair_sites_log_constant(const Matrix& marg_mean, const Matrix& marg_var, const PairSites& sites,
                                      double g) {
  double total = 0;
  for (Eigen::Index j = 0; j < marg_mean.cols(); ++j) {
    for (Eigen::Index i = 0; i < marg_mean.rows(); ++i) {
      auto cav = cavity_from_marginal(marg_mean(i, j), marg_var(i, j), sites.K(i, j), sites.H(i, j));
      if (!cav) {
        total += sites.logC(i, j);
        continue;
      }
      const TiltedMoments t = tilted_step_gaussian_moments(cav->mean, cav->var, g);
      total += site_log_constant(t.log_z, *cav, sites.K(i, j), sites.H(i, j));
    }
  }
  return total;
}

struct EpDiagnostics {
  int sweeps = 0;
  bool converged = false;
  double damping = 0;        // final value, after any halving
  double max_change = 0;     // at the last sweep
  std::size_t skipped = 0;   // at the last sweep
  std::size_t clamped = 0;   // spike-and-slab coordinate sites held at zero precision, last sweep
};

inline constexpr double kDampingFloor = 1e-3;

/// Damped blend of site proposals; on a non-positive-definite assembly the
/// damping is halved and the blend retried, down to kDampingFloor.
template <class Assemble>
double apply_damped(PairSites& sites, const PairUpdate& up, double& eta, Assemble&& assemble) {
  while (true) {
    PairSites cand{eta * up.K + (1 - eta) * sites.K, eta * up.H + (1 - eta) * sites.H, up.logC};
    if (assemble(cand)) {
      double change = 0;
      if (cand.K.size() > 0) {
        change = std::max((cand.K - sites.K).cwiseAbs().maxCoeff(), (cand.H - sites.H).cwiseAbs().maxCoeff());
      }
      sites = std::move(cand);
      return change;
    }
    eta *= 0.5;
    if (eta < kDampingFloor)
      throw NumericalError("EP lost positive definiteness; damping fell below " + std::to_string(kDampingFloor));
  }
}

/// Parallel EP driver: every sweep computes all pair proposals against the
/// current global approximation, then reassembles once.
template <class Marginals, class Assemble>
EpDiagnostics run_parallel_pair_ep(PairSites& sites, double g, const EpConfig& cfg, Marginals&& marginals,
                                   Assemble&& assemble) {
  EpDiagnostics diag;
  double eta = cfg.damping;
  Matrix mm, mv;
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    marginals(mm, mv);
    PairUpdate up = propose_pair_sites(mm, mv, sites, g);
    diag.max_change = apply_damped(sites, up, eta, assemble);
    diag.sweeps = sweep;
    diag.skipped = up.skipped;
    if (diag.max_change < cfg.tolerance) {
      diag.converged = true;
      break;
    }
  }
  diag.damping = eta;
  return diag;
}

}  // namespace pacrank::ep
