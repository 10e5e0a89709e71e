#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <string>
#include <vector>

#include "pacrank/ep_common.hpp"
#include "pacrank/ep_gaussian.hpp"
#include "pacrank/targets.hpp"

namespace pacrank::ep {

/// Coordinate site exp(z*logit - u*theta^2/2 + v*theta) replacing the
/// spike-and-slab prior factor of one coordinate. z = 1 is the slab.
struct CoordinateSites {
  Vector logit;  // l_k
  Vector prec;   // u_k
  Vector shift;  // v_k
};

struct SpikeSlabTilted {
  double log_z;      // against the unnormalized cavity exp(-lambda t^2/2 + eta t)
  double inclusion;  // slab responsibility
  double mean;
  double var;
};

struct CoordinateUpdate {
  double logit, prec, shift;
  SpikeSlabTilted tilted;
};

namespace detail {

// log int exp(-lambda t^2/2 + eta t) N(t; 0, w) dt, valid for 1 + lambda w > 0 (w = 0 allowed)
inline double log_component(double lambda, double eta, double w) {
  const double s = 1.0 + lambda * w;
  return -0.5 * std::log(s) + 0.5 * eta * eta * w / s;
}

}  // namespace detail

// Tilted variances are floored here; a Dirac spike would otherwise drive the
// site precision to infinity.
inline constexpr double kCoordinateVarFloor = 1e-10;

/// Moment matching of one coordinate site against the two-component
/// mixture prior, with the cavity in natural form (lambda, eta). lambda may be
/// 0 (flat cavity) or negative as long as 1 + lambda * v1 > 0.
inline std::optional<CoordinateUpdate> spike_slab_site_update_natural(double lambda, double eta, double p_cav,
                                                                      const SpikeSlabPrior& prior) {
  if (!(1.0 + lambda * prior.v1 > 0) || !(1.0 + lambda * prior.v0 > 0)) return std::nullopt;
  const double la1 = detail::log_component(lambda, eta, prior.v1);
  const double la0 = detail::log_component(lambda, eta, prior.v0);
  double log_z, r;
  if (p_cav >= 1) {
    log_z = la1;
    r = 1;
  } else if (p_cav <= 0) {
    log_z = la0;
    r = 0;
  } else {
    const double l1 = std::log(p_cav) + la1;
    const double l0 = std::log1p(-p_cav) + la0;
    log_z = normal::log_add_exp(l1, l0);
    r = std::exp(l1 - log_z);
  }
  // component posteriors: precision 1/w + lambda, mean eta * var
  auto comp = [&](double w) {
    const double var = w / (1.0 + lambda * w);
    return std::pair{eta * var, var};
  };
  const auto [mu1, s1] = comp(prior.v1);
  const auto [mu0, s0] = comp(prior.v0);
  const double mean = r * mu1 + (1 - r) * mu0;
  double var = r * s1 + (1 - r) * s0 + r * (1 - r) * (mu1 - mu0) * (mu1 - mu0);
  var = std::max(var, kCoordinateVarFloor * prior.v1);

  CoordinateUpdate up;
  up.tilted = {log_z, r, mean, var};
  up.prec = 1.0 / var - lambda;
  up.shift = mean / var - eta;
  // posterior logit = logit(p) + l, and the slab/spike evidence ratio is la1 - la0
  up.logit = (p_cav > 0 && p_cav < 1) ? la1 - la0 : 0.0;
  return up;
}

/// Same update with a normalized cavity N(m_cav, v_cav).
inline std::optional<CoordinateUpdate> spike_slab_site_update(double p_cav, double m_cav, double v_cav,
                                                              const SpikeSlabPrior& prior) {
  if (!(v_cav > 0)) return std::nullopt;
  auto up = spike_slab_site_update_natural(1.0 / v_cav, m_cav / v_cav, p_cav, prior);
  if (up) {
    // convert log Z to the normalized-cavity convention
    up->tilted.log_z += normal::log_density(0.0, m_cav, v_cav);
  }
  return up;
}

struct SpikeSlabApprox {
  GaussianApprox gaussian;
  Vector inclusion;
};

struct SpikeSlabFit {
  SpikeSlabApprox approx;
  PairSites pair_sites;
  CoordinateSites coord_sites;
  EpDiagnostics diagnostics;
  double gamma = 0;
  SpikeSlabPrior prior;

  Vector scores(const Matrix& x) const { return x * approx.gaussian.mean; }
};

/// Starting sites: the coordinate sites hold the moment-matched mixture
/// prior N(0, p*v1 + (1-p)*v0) with neutral logits, so the initial inclusion
/// is exactly p. Later sweeps replace that Gaussian through the site updates.
inline CoordinateSites initial_coordinate_sites(std::size_t d, const SpikeSlabPrior& prior) {
  const auto dd = static_cast<Eigen::Index>(d);
  return {Vector::Zero(dd), Vector::Constant(dd, 1.0 / prior.mixture_variance()), Vector::Zero(dd)};
}

namespace detail {

inline double spike_slab_log_evidence(const LinearPairModel& model, const PairSites& pairs,
                                      const CoordinateSites& coords, const SpikeSlabPrior& prior, double g) {
  Matrix mm, mv;
  model.marginals(mm, mv);
  double total = pair_sites_log_constant(mm, mv, pairs, g);
  const Vector& m = model.mean();
  const Matrix& V = model.cov();
  const auto d = m.size();
  for (Eigen::Index k = 0; k < d; ++k) {
    const double vk = V(k, k);
    const double lambda = 1.0 / vk - coords.prec(k);
    const double eta = m(k) / vk - coords.shift(k);
    auto up = spike_slab_site_update_natural(lambda, eta, prior.p, prior);
    const double log_zk = up ? up->tilted.log_z : 0.0;
    // coordinate constant after the Bernoulli normalizers cancel against the global integral
    total += log_zk - 0.5 * std::log(2 * std::numbers::pi * vk) - 0.5 * m(k) * m(k) / vk;
  }
  total += 0.5 * static_cast<double>(d) * std::log(2 * std::numbers::pi) - 0.5 * model.log_det_precision() +
           0.5 * model.shift().dot(m);
  return total;
}

}  // namespace detail

/// EP under the spike-and-slab prior: alternating parallel sweeps over pair
/// sites and coordinate sites, each followed by one reassembly. v0 = 0 is
/// supported (Dirac spike).
inline SpikeSlabFit ep_fit_spike_slab(const LabeledDataset& ds, const SpikeSlabPrior& prior, const EpConfig& cfg,
                                      const SpikeSlabFit* warm_start = nullptr) {
  cfg.validate();
  prior.validate();
  require_both_classes(ds);
  const double g = pair_temperature(cfg.gamma, ds);
  const std::size_t d = ds.d();

  CoordinateSites coords = warm_start ? warm_start->coord_sites : initial_coordinate_sites(d, prior);
  PairSites pairs = warm_start ? warm_start->pair_sites : PairSites::zeros(ds.n_pos(), ds.n_neg());
  LinearPairModel model(ds, coords.prec, coords.shift);
  model.seed_degenerate(pairs, g);
  if (!model.assemble(pairs)) {
    // a warm start from a different v0 can be indefinite; fall back to a cold start
    coords = initial_coordinate_sites(d, prior);
    pairs = PairSites::zeros(ds.n_pos(), ds.n_neg());
    model.seed_degenerate(pairs, g);
    model.set_base(coords.prec, coords.shift);
    if (!model.assemble(pairs)) throw NumericalError("initial spike-and-slab approximation is not positive definite");
  }

  SpikeSlabFit fit;
  fit.prior = prior;
  fit.gamma = cfg.gamma;
  EpDiagnostics& diag = fit.diagnostics;
  double eta = cfg.damping;
  Matrix mm, mv;
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    // pair sites
    double change = 0;
    if (g > 0 || sweep == 1) {
      model.marginals(mm, mv);
      PairUpdate up = propose_pair_sites(mm, mv, pairs, g);
      change = apply_damped(pairs, up, eta, [&](const PairSites& c) { return model.assemble(c); });
      diag.skipped = up.skipped;
    }

    // coordinate sites
    const Vector m = model.mean();
    const Vector vdiag = model.cov().diagonal();
    CoordinateSites proposal = coords;
    diag.clamped = 0;
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(d); ++k) {
      const double lambda = 1.0 / vdiag(k) - coords.prec(k);
      const double eta_c = m(k) / vdiag(k) - coords.shift(k);
      auto up = spike_slab_site_update_natural(lambda, eta_c, prior.p, prior);
      if (!up || !std::isfinite(up->prec) || !std::isfinite(up->shift)) {
        ++diag.skipped;
        continue;
      }
      // The mixture can be wider than the cavity, which asks for a negative
      // site precision and drives the joint precision towards indefinite.
      // Clamp at zero and still match the tilted mean.
      if (up->prec < 0) {
        up->prec = 0;
        up->shift = up->tilted.mean * lambda - eta_c;
        ++diag.clamped;
      }
      proposal.logit(k) = up->logit;
      proposal.prec(k) = up->prec;
      proposal.shift(k) = up->shift;
    }
    while (true) {
      CoordinateSites cand{eta * proposal.logit + (1 - eta) * coords.logit,
                           eta * proposal.prec + (1 - eta) * coords.prec,
                           eta * proposal.shift + (1 - eta) * coords.shift};
      model.set_base(cand.prec, cand.shift);
      if (model.assemble(pairs)) {
        // precisions near the Dirac limit are huge; compare them on a relative scale
        const Vector prec_scale = coords.prec.cwiseAbs().cwiseMax(1.0);
        change = std::max({change, ((cand.prec - coords.prec).cwiseAbs().array() / prec_scale.array()).maxCoeff(),
                           (cand.shift - coords.shift).cwiseAbs().maxCoeff(),
                           (cand.logit - coords.logit).cwiseAbs().maxCoeff()});
        coords = std::move(cand);
        break;
      }
      eta *= 0.5;
      if (eta < kDampingFloor)
        throw NumericalError("spike-and-slab EP lost positive definiteness; damping fell below " +
                             std::to_string(kDampingFloor));
    }
    diag.sweeps = sweep;
    diag.max_change = change;
    if (change < cfg.tolerance) {
      diag.converged = true;
      break;
    }
  }
  diag.damping = eta;

  fit.approx.gaussian.mean = model.mean();
  fit.approx.gaussian.cov = model.cov();
  fit.approx.gaussian.log_evidence = detail::spike_slab_log_evidence(model, pairs, coords, prior, g);
  fit.approx.inclusion.resize(static_cast<Eigen::Index>(d));
  const double base_logit = (prior.p > 0 && prior.p < 1) ? normal::logit(prior.p) : 0.0;
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(d); ++k) {
    if (prior.p <= 0)
      fit.approx.inclusion(k) = 0;
    else if (prior.p >= 1)
      fit.approx.inclusion(k) = 1;
    else
      fit.approx.inclusion(k) = normal::sigmoid(base_logit + coords.logit(k));
  }
  fit.pair_sites = std::move(pairs);
  fit.coord_sites = std::move(coords);
  return fit;
}

// ---------------------------------------------------------------------------

inline constexpr double kSelectionThreshold = 0.5;

struct PathPoint {
  double v0;
  Vector mean;
  Vector inclusion;
  std::vector<std::size_t> selected;  // inclusion >= 0.5
  double log_evidence = 0;
  bool ok = true;
  std::string error;
};

/// 13 log-spaced spike variances from 0.1 down to 1e-6.
inline std::vector<double> default_v0_grid(std::size_t points = 13, double hi = 0.1, double lo = 1e-6) {
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    grid[i] = std::exp(std::log(hi) + t * (std::log(lo) - std::log(hi)));
  }
  return grid;
}

/// Regularization path over a descending v0 grid, warm-starting each fit
/// from the previous grid point. Failures are recorded and the path continues.
inline std::vector<PathPoint> regularization_path(const LabeledDataset& ds, const SpikeSlabPrior& base,
                                                  const std::vector<double>& v0_grid, const EpConfig& cfg) {
  if (!std::is_sorted(v0_grid.begin(), v0_grid.end(), std::greater<>()))
    throw UsageError("v0 grid must be sorted in descending order");
  std::vector<PathPoint> path;
  std::optional<SpikeSlabFit> prev;
  for (double v0 : v0_grid) {
    SpikeSlabPrior prior = base;
    prior.v0 = v0;
    PathPoint pt;
    pt.v0 = v0;
    try {
      SpikeSlabFit fit = ep_fit_spike_slab(ds, prior, cfg, prev ? &*prev : nullptr);
      pt.mean = fit.approx.gaussian.mean;
      pt.inclusion = fit.approx.inclusion;
      pt.log_evidence = fit.approx.gaussian.log_evidence;
      for (Eigen::Index k = 0; k < pt.inclusion.size(); ++k)
        if (pt.inclusion(k) >= kSelectionThreshold) pt.selected.push_back(static_cast<std::size_t>(k));
      prev = std::move(fit);
    } catch (const std::exception& e) {
      pt.ok = false;
      pt.error = e.what();
    }
    path.push_back(std::move(pt));
  }
  return path;
}

inline void write_path_csv(const std::vector<PathPoint>& path, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write '" + file + "'");
  out << "v0,coordinate,posterior_mean,inclusion\n" << std::setprecision(17);
  for (const auto& pt : path) {
    if (!pt.ok) continue;
    for (Eigen::Index k = 0; k < pt.mean.size(); ++k)
      out << pt.v0 << ',' << k << ',' << pt.mean(k) << ',' << pt.inclusion(k) << '\n';
  }
}

}  // namespace pacrank::ep
