#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "pacrank/data.hpp"
#include "pacrank/errors.hpp"
#include "pacrank/normal.hpp"
#include "pacrank/risk.hpp"

namespace pacrank {

/// Independent N(0, variance) on every coordinate.
struct GaussianPrior {
  double variance = 1.0;

  void validate() const {
    if (!(variance > 0) || !std::isfinite(variance))
      throw UsageError("Gaussian prior variance must be positive, got " + std::to_string(variance));
  }
};

/// Per-coordinate mixture p*N(0, v1) + (1-p)*N(0, v0); v0 = 0 is a Dirac spike.
struct SpikeSlabPrior {
  double p = 0.5;
  double v0 = 0.01;
  double v1 = 1.0;

  void validate() const {
    if (!(p >= 0 && p <= 1)) throw UsageError("inclusion probability must lie in [0,1]");
    if (!(v0 >= 0)) throw UsageError("spike variance must be >= 0");
    if (!(v1 > 0) || !(v0 < v1)) throw UsageError("need 0 <= v0 < v1");
  }
  /// Variance of the mixture, used as the Gaussian starting point for EP.
  double mixture_variance() const { return p * v1 + (1 - p) * v0; }
};

inline double log_prior(const GaussianPrior& prior, const Vector& theta) {
  const double d = static_cast<double>(theta.size());
  return -0.5 * theta.squaredNorm() / prior.variance - 0.5 * d * std::log(prior.variance) -
         d * normal::kLogSqrt2Pi;
}

inline Vector log_prior_gradient(const GaussianPrior& prior, const Vector& theta) {
  return -theta / prior.variance;
}

inline double log_prior(const SpikeSlabPrior& prior, const Vector& theta) {
  if (prior.v0 <= 0)
    throw UsageError("spike-and-slab prior with v0 = 0 has no density; pointwise evaluation is EP-only");
  double lp = 0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double slab = prior.p > 0 ? std::log(prior.p) + normal::log_density(theta(k), 0, prior.v1) : -INFINITY;
    const double spike =
        prior.p < 1 ? std::log1p(-prior.p) + normal::log_density(theta(k), 0, prior.v0) : -INFINITY;
    lp += normal::log_add_exp(slab, spike);
  }
  return lp;
}

template <class Rng>
Vector sample_prior(const GaussianPrior& prior, std::size_t d, Rng& rng) {
  std::normal_distribution<double> z;
  Vector out(static_cast<Eigen::Index>(d));
  const double sd = std::sqrt(prior.variance);
  for (auto& v : out) v = sd * z(rng);
  return out;
}

template <class Rng>
Vector sample_prior(const SpikeSlabPrior& prior, std::size_t d, Rng& rng) {
  std::normal_distribution<double> z;
  std::bernoulli_distribution slab(prior.p);
  Vector out(static_cast<Eigen::Index>(d));
  for (auto& v : out) v = std::sqrt(slab(rng) ? prior.v1 : prior.v0) * z(rng);
  return out;
}

/// Gibbs pseudo-posterior over linear scores s(x) = <theta, x>:
/// log prior(theta) - gamma * misrank_loss(X theta).
template <class Prior>
struct LinearGibbsTarget {
  const LabeledDataset* data = nullptr;
  Prior prior;
  double gamma = 0.0;

  LinearGibbsTarget(const LabeledDataset& ds, Prior pr, double g = 0.0) : data(&ds), prior(pr), gamma(g) {
    require_both_classes(ds);
    if (!(gamma >= 0)) throw UsageError("temperature gamma must be >= 0");
  }

  std::size_t dim() const { return data->d(); }

  double log_prior(const Vector& theta) const { return pacrank::log_prior(prior, theta); }

  double loss(const Vector& theta) const {
    Vector s = data->features * theta;
    return misrank_loss(s, *data);
  }

  template <class Rng>
  Vector sample_prior(Rng& rng) const {
    return pacrank::sample_prior(prior, dim(), rng);
  }

  // Pre-allocated variant used inside the SMC inner loop.
  double loss(const Vector& theta, Vector& score_buf, std::vector<double>& scratch) const {
    score_buf.noalias() = data->features * theta;
    const auto bad = detail::count_misranked(score_buf, data->pos_idx, data->neg_idx, scratch);
    return static_cast<double>(bad) / static_cast<double>(data->n_pairs());
  }
};

template <class Target>
double log_pseudo_posterior_unnorm(const Target& target, const Vector& theta) {
  if (target.gamma == 0.0) return target.log_prior(theta);
  return target.log_prior(theta) - target.gamma * target.loss(theta);
}

// ---------------------------------------------------------------------------
// Default hyperparameter recipes

enum class MarginMode { MA1, MAinf };

struct DefaultHyperRecipe {
  double C = 1.0;  // margin constant, >= 1
  MarginMode mode = MarginMode::MA1;
};

struct DefaultHyperparameters {
  double theta_variance;  // Gaussian prior variance
  double gamma;
  double p;        // spike-and-slab inclusion probability
  double v0_max;   // largest admissible spike variance
};

/// Default (theta_variance, gamma, p, v0_max) for a dataset of size n in dimension d.
/// The log d in the v0 bound is floored at 1 so small d does not blow it up.
inline DefaultHyperparameters default_hyperparameters(std::size_t n, std::size_t d,
                                                      const DefaultHyperRecipe& recipe = {}) {
  if (n < 2 || d < 1) throw UsageError("default hyperparameters need n >= 2 and d >= 1");
  if (!(recipe.C >= 1)) throw UsageError("margin constant C must be >= 1");
  const double nn = static_cast<double>(n);
  const double dd = static_cast<double>(d);
  DefaultHyperparameters h{};
  h.theta_variance = (2.0 / dd) * (1.0 + 1.0 / (nn * nn * dd));
  h.gamma = recipe.mode == MarginMode::MA1 ? (nn - 1.0) / (8.0 * recipe.C)
                                           : recipe.C * std::sqrt(dd * nn * std::log(nn));
  h.p = 1.0 - std::exp(-1.0 / dd);
  h.v0_max = 1.0 / (2.0 * nn * dd * std::max(std::log(dd), 1.0));
  return h;
}

}  // namespace pacrank
