#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pacrank/data.hpp"
#include "pacrank/ep_gaussian.hpp"
#include "pacrank/gp.hpp"
#include "pacrank/risk.hpp"
#include "pacrank/targets.hpp"
#include "pacrank/tuning.hpp"

namespace pacrank::bench {

/// One dataset row of the comparison table.
struct DatasetEntry {
  std::string name;
  std::string path;
  LabelSpec label;
  std::optional<double> reference_ep_auc;
  std::optional<double> reference_gp_auc;
};

/// JSON array of {name, path, label_col, positive_label, one_vs_rest,
/// reference_ep_auc, reference_gp_auc}; relative paths resolve against the
/// manifest's directory.
inline std::vector<DatasetEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_array()) throw DataError("manifest must be a JSON array of datasets");
  std::string dir;
  if (auto slash = path.find_last_of('/'); slash != std::string::npos) dir = path.substr(0, slash + 1);
  std::vector<DatasetEntry> out;
  for (const auto& e : j) {
    DatasetEntry d;
    d.name = e.value("name", "");
    d.path = e.value("path", "");
    if (d.name.empty() || d.path.empty()) throw DataError("manifest entries need 'name' and 'path'");
    if (d.path.front() != '/') d.path = dir + d.path;
    d.label.column = e.value("label_col", "");
    d.label.positive_label = e.value("positive_label", "");
    d.label.one_vs_rest = e.value("one_vs_rest", false);
    if (e.contains("reference_ep_auc")) d.reference_ep_auc = e["reference_ep_auc"].get<double>();
    if (e.contains("reference_gp_auc")) d.reference_gp_auc = e["reference_gp_auc"].get<double>();
    out.push_back(std::move(d));
  }
  return out;
}

struct TunedGaussian {
  double theta_variance;
  double gamma;
  tuning::EvidenceTable evidence;
  tuning::CvResult cv;
};

/// Prior variance by evidence at the default temperature, then gamma by CV.
inline TunedGaussian tune_gaussian_ep(const LabeledDataset& train, std::size_t folds, std::uint64_t seed,
                                      const ep::EpConfig& base) {
  const auto hyper = default_hyperparameters(train.n(), train.d());
  ep::EpConfig cfg = base;
  cfg.gamma = hyper.gamma;
  auto table = tuning::tune_theta_variance_ep(train, tuning::default_theta_grid(hyper.theta_variance), cfg);
  const double theta = table.best_value;
  auto cv = tuning::cross_validate_gamma(train, tuning::default_gamma_grid(train.n()), folds, seed,
                                         tuning::ep_gaussian_scorer(GaussianPrior{theta}, base));
  return {theta, cv.best_gamma, std::move(table), std::move(cv)};
}

struct TunedGp {
  gp::SqExpKernel kernel;
  double gamma;
  tuning::EvidenceTable evidence;
  tuning::CvResult cv;
};

/// Lengthscale by evidence over sqrt(d) x {1/2, 1, 2} at the default
/// temperature, then gamma by CV over a coarse grid.
inline TunedGp tune_gp_ep(const LabeledDataset& train, std::size_t folds, std::uint64_t seed, const ep::EpConfig& base,
                          double signal_variance = 1.0, std::size_t gamma_points = 4) {
  const auto hyper = default_hyperparameters(train.n(), train.d());
  ep::EpConfig cfg = base;
  cfg.gamma = hyper.gamma;
  const double ls0 = std::sqrt(static_cast<double>(train.d()));
  auto table = tuning::tune_lengthscale_gp(train, {0.5 * ls0, ls0, 2.0 * ls0}, signal_variance, cfg);
  const auto kernel = gp::SqExpKernel::with_default_jitter(signal_variance, table.best_value);
  const double n = static_cast<double>(train.n());
  auto cv = tuning::cross_validate_gamma(train, tuning::log_grid(n / 100.0, 10.0 * n, gamma_points), folds, seed,
                                         tuning::gp_scorer(kernel, base));
  return {kernel, cv.best_gamma, std::move(table), std::move(cv)};
}

struct BenchmarkConfig {
  std::size_t repetitions = 10;
  double test_fraction = 0.3;
  std::size_t folds = 5;
  std::uint64_t seed = 1;
  bool run_ep = true;
  bool run_gp = true;
  ep::EpConfig ep;
};

struct RepetitionResult {
  std::uint64_t seed;
  std::optional<double> ep_auc, gp_auc;
  std::string ep_error, gp_error;
};

struct DatasetResult {
  std::string name;
  std::size_t covariates = 0;
  double balance = 0;  // share of the smaller class
  std::vector<RepetitionResult> reps;
  std::optional<double> ep_auc, gp_auc;  // means over successful repetitions
  std::string error;                     // set when the dataset could not be loaded
};

inline std::optional<double> mean_of(const std::vector<RepetitionResult>& reps,
                                     std::optional<double> RepetitionResult::*field) {
  double s = 0;
  std::size_t c = 0;
  for (const auto& r : reps)
    if (r.*field) {
      s += *(r.*field);
      ++c;
    }
  if (c == 0) return std::nullopt;
  return s / static_cast<double>(c);
}

/// Stratified split, standardization on the training part, tuning on the
/// training part, AUC on the held-out part; repeated with seeds seed, seed+1, ...
inline DatasetResult run_dataset(const std::string& name, const LabeledDataset& ds, const BenchmarkConfig& cfg) {
  DatasetResult res;
  res.name = name;
  res.covariates = ds.d();
  res.balance = static_cast<double>(std::min(ds.n_pos(), ds.n_neg())) / static_cast<double>(ds.n());
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    RepetitionResult rep;
    rep.seed = cfg.seed + r;
    const auto split = stratified_split(ds, cfg.test_fraction, rep.seed);
    const LabeledDataset train_raw = subset(ds, split.train);
    const LabeledDataset test_raw = subset(ds, split.validation);
    auto [train, params] = standardize(train_raw);
    const Matrix test_x = params.apply(test_raw.features);
    if (cfg.run_ep) {
      try {
        const auto t = tune_gaussian_ep(train, cfg.folds, rep.seed, cfg.ep);
        ep::EpConfig c = cfg.ep;
        c.gamma = t.gamma;
        const auto fit = ep::ep_fit(train, GaussianPrior{t.theta_variance}, c);
        rep.ep_auc = auc(fit.scores(test_x), test_raw.labels);
      } catch (const std::exception& e) {
        rep.ep_error = e.what();
      }
    }
    if (cfg.run_gp) {
      try {
        const auto t = tune_gp_ep(train, cfg.folds, rep.seed, cfg.ep);
        ep::EpConfig c = cfg.ep;
        c.gamma = t.gamma;
        rep.gp_auc = auc(gp::gp_predict(gp::gp_ep_fit(train, t.kernel, c), test_x), test_raw.labels);
      } catch (const std::exception& e) {
        rep.gp_error = e.what();
      }
    }
    res.reps.push_back(std::move(rep));
  }
  res.ep_auc = mean_of(res.reps, &RepetitionResult::ep_auc);
  res.gp_auc = mean_of(res.reps, &RepetitionResult::gp_auc);
  return res;
}

inline std::string format_table(const std::vector<DatasetResult>& rows) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(4);
    s << *v;
    return s.str();
  };
  std::ostringstream out;
  out << "Dataset\tCovariates\tBalance\tEP-AUC\tGPEP-AUC\n";
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      out << r.name << "\tfailed: " << r.error << '\n';
      continue;
    }
    out << r.name << '\t' << r.covariates << '\t' << static_cast<int>(std::lround(100 * r.balance)) << "%\t"
        << cell(r.ep_auc) << '\t' << cell(r.gp_auc) << '\n';
  }
  return out.str();
}

}  // namespace pacrank::bench
