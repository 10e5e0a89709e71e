#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pacrank/data.hpp"
#include "pacrank/ep_gaussian.hpp"
#include "pacrank/ep_spike_slab.hpp"
#include "pacrank/gp.hpp"
#include "pacrank/risk.hpp"
#include "pacrank/smc.hpp"
#include "pacrank/targets.hpp"

namespace pacrank::tuning {

struct GridEntry {
  double value;
  std::optional<double> score;
  std::string error;
};

struct EvidenceTable {
  std::vector<GridEntry> entries;
  double best_value = 0;
  std::size_t best_index = 0;
};

inline constexpr double kEvidenceTieTolerance = 1e-9;

/// Grid search for the largest log-evidence. `log_evidence_at(value)` may
/// throw; such points are recorded and skipped. Values within
/// kEvidenceTieTolerance (relative) of the best count as ties, and ties keep
/// the earlier point. Note that for linear scores under an isotropic Gaussian
/// prior the evidence does not depend on the prior variance at all, since the
/// loss only sees the direction of theta.
template <class F>
EvidenceTable maximize_evidence(const std::vector<double>& grid, F&& log_evidence_at) {
  if (grid.empty()) throw UsageError("evidence grid is empty");
  EvidenceTable t;
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    GridEntry e{grid[i], std::nullopt, {}};
    try {
      const double v = log_evidence_at(grid[i]);
      if (!std::isfinite(v)) throw NumericalError("non-finite log-evidence");
      e.score = v;
      if (!any || v > best + kEvidenceTieTolerance * (1.0 + std::abs(best))) {
        best = v;
        t.best_index = i;
        t.best_value = grid[i];
        any = true;
      }
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
    t.entries.push_back(std::move(e));
  }
  if (!any) {
    std::string msg = "every evidence grid point failed:";
    for (const auto& e : t.entries) msg += " [" + std::to_string(e.value) + ": " + e.error + "]";
    throw NumericalError(msg);
  }
  return t;
}

inline std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    g[i] = std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
  }
  return g;
}

/// 8 log-spaced temperatures over [n/100, 10n].
inline std::vector<double> default_gamma_grid(std::size_t n) {
  const double nn = static_cast<double>(n);
  return log_grid(nn / 100.0, 10.0 * nn, 8);
}

/// theta0 times {1/8, 1/4, ..., 8}.
inline std::vector<double> default_theta_grid(double theta0) {
  std::vector<double> g;
  for (int e = -3; e <= 3; ++e) g.push_back(theta0 * std::ldexp(1.0, e));
  return g;
}

inline EvidenceTable tune_theta_variance_ep(const LabeledDataset& ds, const std::vector<double>& grid,
                                            const ep::EpConfig& cfg) {
  return maximize_evidence(grid, [&](double v) { return ep::ep_fit(ds, GaussianPrior{v}, cfg).approx.log_evidence; });
}

inline EvidenceTable tune_theta_variance_smc(const LabeledDataset& ds, const std::vector<double>& grid,
                                             const smc::SmcConfig& cfg) {
  return maximize_evidence(grid, [&](double v) {
    return smc::run_tempering_smc(LinearGibbsTarget<GaussianPrior>(ds, GaussianPrior{v}), cfg).log_evidence();
  });
}

inline EvidenceTable tune_lengthscale_gp(const LabeledDataset& ds, const std::vector<double>& grid,
                                         double signal_variance, const ep::EpConfig& cfg) {
  return maximize_evidence(grid, [&](double ls) {
    return gp::gp_ep_fit(ds, gp::SqExpKernel::with_default_jitter(signal_variance, ls), cfg).log_evidence;
  });
}

inline void write_table_csv(const EvidenceTable& t, const std::string& path, const std::string& column) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << column << ",log_evidence\n" << std::setprecision(17);
  for (const auto& e : t.entries) {
    out << e.value << ',';
    if (e.score) out << *e.score;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Cross-validation over gamma

/// Scores of the validation rows for every grid temperature, fitted on the
/// training rows; a missing entry marks a failed (fold, gamma) cell.
using Scorer = std::function<std::vector<std::optional<Vector>>(const LabeledDataset& train, const Matrix& validation,
                                                                const std::vector<double>& gamma_grid)>;

struct CvResult {
  std::vector<double> gamma_grid;
  std::vector<double> mean_auc;  // NaN when every fold failed
  std::vector<std::vector<std::optional<double>>> fold_auc;  // [fold][gamma]
  std::vector<std::string> failures;
  double best_gamma = 0;
  std::size_t best_index = 0;
};

/// Stratified k-fold CV of the half-credit AUC; returns the gamma with the
/// best mean validation AUC, ties going to the smaller gamma.
inline CvResult cross_validate_gamma(const LabeledDataset& ds, const std::vector<double>& gamma_grid, std::size_t k,
                                     std::uint64_t seed, const Scorer& scorer) {
  if (gamma_grid.empty()) throw UsageError("gamma grid is empty");
  if (!std::is_sorted(gamma_grid.begin(), gamma_grid.end())) throw UsageError("gamma grid must be ascending");
  const auto folds = stratified_folds(ds, k, seed);
  CvResult res;
  res.gamma_grid = gamma_grid;
  res.fold_auc.assign(k, std::vector<std::optional<double>>(gamma_grid.size()));
  for (std::size_t f = 0; f < k; ++f) {
    const LabeledDataset train = subset(ds, folds[f].train);
    const LabeledDataset valid = subset(ds, folds[f].validation);
    std::vector<std::optional<Vector>> scores;
    try {
      scores = scorer(train, valid.features, gamma_grid);
    } catch (const std::exception& e) {
      res.failures.push_back("fold " + std::to_string(f) + ": " + e.what());
      continue;
    }
    for (std::size_t g = 0; g < gamma_grid.size(); ++g) {
      if (g < scores.size() && scores[g]) {
        res.fold_auc[f][g] = auc(*scores[g], valid.labels);
      } else {
        res.failures.push_back("fold " + std::to_string(f) + ", gamma " + std::to_string(gamma_grid[g]) + ": fit failed");
      }
    }
  }
  res.mean_auc.assign(gamma_grid.size(), std::numeric_limits<double>::quiet_NaN());
  double best = -1;
  bool any = false;
  for (std::size_t g = 0; g < gamma_grid.size(); ++g) {
    double s = 0;
    std::size_t cnt = 0;
    for (std::size_t f = 0; f < k; ++f)
      if (res.fold_auc[f][g]) {
        s += *res.fold_auc[f][g];
        ++cnt;
      }
    if (cnt == 0) continue;
    res.mean_auc[g] = s / static_cast<double>(cnt);
    if (!any || res.mean_auc[g] > best) {
      best = res.mean_auc[g];
      res.best_index = g;
      any = true;
    }
  }
  if (!any) throw NumericalError("cross-validation failed for every (fold, gamma) cell");
  res.best_gamma = gamma_grid[res.best_index];
  return res;
}

inline void write_cv_csv(const CvResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "gamma,mean_validation_auc\n" << std::setprecision(17);
  for (std::size_t g = 0; g < r.gamma_grid.size(); ++g) out << r.gamma_grid[g] << ',' << r.mean_auc[g] << '\n';
}

/// One Gaussian-prior EP fit per grid temperature.
inline Scorer ep_gaussian_scorer(GaussianPrior prior, ep::EpConfig cfg) {
  return [prior, cfg](const LabeledDataset& train, const Matrix& valid, const std::vector<double>& grid) {
    std::vector<std::optional<Vector>> out;
    for (double g : grid) {
      ep::EpConfig c = cfg;
      c.gamma = g;
      try {
        out.emplace_back(ep::ep_fit(train, prior, c).scores(valid));
      } catch (const NumericalError&) {
        out.emplace_back(std::nullopt);
      }
    }
    return out;
  };
}

/// One SMC run to the largest grid temperature; every smaller temperature
/// is read off the ladder by reweighting.
template <class Prior>
Scorer smc_scorer(Prior prior, smc::SmcConfig cfg) {
  return [prior, cfg](const LabeledDataset& train, const Matrix& valid, const std::vector<double>& grid) {
    smc::SmcConfig c = cfg;
    c.gamma_max = grid.back();
    c.keep_history = true;
    const auto ps = smc::run_tempering_smc(LinearGibbsTarget<Prior>(train, prior), c);
    std::vector<std::optional<Vector>> out;
    for (double g : grid) out.emplace_back(Vector(valid * ps.mean_at(g)));
    return out;
  };
}

inline Scorer ep_spike_slab_scorer(SpikeSlabPrior prior, ep::EpConfig cfg) {
  return [prior, cfg](const LabeledDataset& train, const Matrix& valid, const std::vector<double>& grid) {
    std::vector<std::optional<Vector>> out;
    for (double g : grid) {
      ep::EpConfig c = cfg;
      c.gamma = g;
      try {
        out.emplace_back(ep::ep_fit_spike_slab(train, prior, c).scores(valid));
      } catch (const NumericalError&) {
        out.emplace_back(std::nullopt);
      }
    }
    return out;
  };
}

inline Scorer gp_scorer(gp::SqExpKernel kernel, ep::EpConfig cfg) {
  return [kernel, cfg](const LabeledDataset& train, const Matrix& valid, const std::vector<double>& grid) {
    std::vector<std::optional<Vector>> out;
    for (double g : grid) {
      ep::EpConfig c = cfg;
      c.gamma = g;
      try {
        out.emplace_back(gp::gp_predict(gp::gp_ep_fit(train, kernel, c), valid));
      } catch (const NumericalError&) {
        out.emplace_back(std::nullopt);
      }
    }
    return out;
  };
}

}  // namespace pacrank::tuning
