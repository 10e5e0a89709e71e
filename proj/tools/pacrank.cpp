#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pacrank/pacrank.hpp"

using namespace pacrank;

namespace {

struct Options {
  std::string data;
  std::string label_col;
  std::string positive_label;
  bool one_vs_rest = false;
  std::string prior = "gaussian";
  bool gp = false;
  std::string backend = "ep";
  std::string gamma = "auto";
  std::optional<double> v0, v1, p, theta_var, kernel_ls;
  double kernel_var = 1.0;
  std::size_t particles = 1000;
  double ess_tau = 0.5;
  std::optional<double> kappa;
  int move_steps = 3;
  double damping = 0.8;
  int max_sweeps = 200;
  std::size_t folds = 5;
  std::uint64_t seed = 1;
  std::string out;
  bool save_covariance = false;
  bool no_standardize = false;
  std::string particles_out;
  std::string tuning_out;
  std::string model;
  std::string manifest;
  std::size_t reps = 10;
  double test_fraction = 0.3;
  std::string methods = "ep,gp";
  std::vector<double> v0_grid;
};

void add_data_options(CLI::App* cmd, Options& o, bool labels_required) {
  auto* d = cmd->add_option("--data", o.data, "CSV file");
  if (labels_required) d->required();
  cmd->add_option("--label-col", o.label_col, "label column name or index (default: last column)");
  cmd->add_option("--positive-label", o.positive_label, "label token treated as the positive class");
  cmd->add_flag("--one-vs-rest", o.one_vs_rest, "map every token other than --positive-label to the negative class");
}

void add_ep_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--damping", o.damping, "EP damping in (0,1]")->capture_default_str();
  cmd->add_option("--max-sweeps", o.max_sweeps, "EP sweep limit")->capture_default_str();
}

void add_smc_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--particles", o.particles, "SMC particle count")->capture_default_str();
  cmd->add_option("--ess-tau", o.ess_tau, "ESS fraction that triggers a new temperature")->capture_default_str();
  cmd->add_option("--kappa", o.kappa, "random-walk proposal scale (default 2.38^2/dim)");
  cmd->add_option("--move-steps", o.move_steps, "Metropolis steps per temperature")->capture_default_str();
}

void add_prior_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--prior", o.prior, "prior family")->check(CLI::IsMember({"gaussian", "spikeslab"}))->capture_default_str();
  cmd->add_flag("--gp", o.gp, "Gaussian-process prior on the scores (squared-exponential kernel)");
  cmd->add_option("--theta-var", o.theta_var, "Gaussian prior variance");
  cmd->add_option("--v0", o.v0, "spike variance (0 = Dirac spike, EP only)");
  cmd->add_option("--v1", o.v1, "slab variance");
  cmd->add_option("--p", o.p, "prior inclusion probability");
  cmd->add_option("--kernel-ls", o.kernel_ls, "kernel lengthscale (default sqrt(d), or tuned with --gamma auto)");
  cmd->add_option("--kernel-var", o.kernel_var, "kernel signal variance")->capture_default_str();
}

std::optional<double> parse_gamma(const std::string& s) {
  if (s == "auto") return std::nullopt;
  double v = 0;
  try {
    std::size_t used = 0;
    v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw UsageError("--gamma expects a number or 'auto', got '" + s + "'");
  }
  if (!(v >= 0) || !std::isfinite(v)) throw UsageError("--gamma must be finite and >= 0");
  return v;
}

ep::EpConfig ep_config(const Options& o, double gamma) {
  ep::EpConfig c;
  c.gamma = gamma;
  c.damping = o.damping;
  c.max_sweeps = o.max_sweeps;
  c.validate();
  return c;
}

smc::SmcConfig smc_config(const Options& o, double gamma) {
  smc::SmcConfig c;
  c.particles = o.particles;
  c.ess_tau = o.ess_tau;
  c.kappa = o.kappa;
  c.move_steps = o.move_steps;
  c.gamma_max = gamma;
  c.seed = o.seed;
  c.validate();
  return c;
}

LabeledDataset load_labeled(const Options& o) {
  return load_dataset(o.data, LabelSpec{o.label_col, o.positive_label, o.one_vs_rest});
}

void report_evidence_table(const tuning::EvidenceTable& t, const std::string& what) {
  std::cerr << "evidence over " << what << ":\n";
  for (const auto& e : t.entries) {
    std::cerr << "  " << std::setw(12) << e.value << "  ";
    if (e.score)
      std::cerr << *e.score;
    else
      std::cerr << "failed: " << e.error;
    std::cerr << '\n';
  }
  std::cerr << "  selected " << what << " = " << t.best_value << '\n';
}

void report_cv(const tuning::CvResult& cv) {
  std::cerr << "cross-validated gamma:\n";
  for (std::size_t g = 0; g < cv.gamma_grid.size(); ++g)
    std::cerr << "  " << std::setw(12) << cv.gamma_grid[g] << "  mean AUC " << cv.mean_auc[g] << '\n';
  for (const auto& f : cv.failures) std::cerr << "  dropped: " << f << '\n';
  std::cerr << "  selected gamma = " << cv.best_gamma << '\n';
}

void write_particles(const smc::ParticleSystem& ps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << std::setprecision(17) << "weight,loss";
  for (Eigen::Index k = 0; k < ps.particles.cols(); ++k) out << ",theta" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < ps.particles.rows(); ++i) {
    out << ps.weights(i) << ',' << ps.losses(i);
    for (Eigen::Index k = 0; k < ps.particles.cols(); ++k) out << ',' << ps.particles(i, k);
    out << '\n';
  }
}

// Posterior probability of the slab component, averaged over the weighted cloud.
Vector smc_inclusion(const smc::ParticleSystem& ps, const SpikeSlabPrior& prior) {
  Vector inc = Vector::Zero(ps.particles.cols());
  for (Eigen::Index i = 0; i < ps.particles.rows(); ++i) {
    for (Eigen::Index k = 0; k < ps.particles.cols(); ++k) {
      const double x = ps.particles(i, k);
      const double l1 = std::log(prior.p) + normal::log_density(x, 0.0, prior.v1);
      const double l0 = std::log1p(-prior.p) + normal::log_density(x, 0.0, prior.v0);
      inc(k) += ps.weights(i) * normal::sigmoid(l1 - l0);
    }
  }
  return inc;
}

int cmd_fit(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  if (o.backend != "ep" && o.backend != "smc") throw UsageError("--backend must be 'ep' or 'smc'");
  const bool smc_backend = o.backend == "smc";
  if (!o.gp && o.prior == "spikeslab" && smc_backend && o.v0 && *o.v0 == 0)
    throw UsageError("a Dirac spike (--v0 0) has no density; use --backend ep or a positive --v0");
  const std::optional<double> fixed_gamma = parse_gamma(o.gamma);

  const LabeledDataset raw = load_labeled(o);
  require_both_classes(raw);
  StandardizationParams params;
  LabeledDataset ds;
  if (o.no_standardize) {
    params = StandardizationParams::identity(raw.d());
    ds = raw;
  } else {
    std::tie(ds, params) = standardize(raw);
    for (std::size_t c = 0; c < params.constant.size(); ++c)
      if (params.constant[c]) std::cerr << "warning: feature '" << raw.feature_names[c] << "' is constant\n";
  }
  const auto hyper = default_hyperparameters(ds.n(), ds.d());
  const std::vector<double> gamma_grid = tuning::default_gamma_grid(ds.n());

  FittedModel m;
  m.backend = o.backend;
  m.seed = o.seed;
  m.standardization = params;
  m.feature_names = raw.feature_names;
  const bool want_cv = !fixed_gamma;

  auto pick_gamma = [&](const tuning::Scorer& scorer) {
    if (fixed_gamma) return *fixed_gamma;
    const auto cv = tuning::cross_validate_gamma(ds, gamma_grid, o.folds, o.seed, scorer);
    report_cv(cv);
    if (!o.tuning_out.empty()) tuning::write_cv_csv(cv, o.tuning_out + "_gamma.csv");
    return cv.best_gamma;
  };

  if (o.gp) {
    m.kind = ModelKind::Gp;
    double ls = o.kernel_ls.value_or(std::sqrt(static_cast<double>(ds.d())));
    if (!o.kernel_ls && want_cv) {
      const double ls0 = ls;
      const auto t = tuning::tune_lengthscale_gp(ds, {0.5 * ls0, ls0, 2.0 * ls0}, o.kernel_var,
                                                 ep_config(o, hyper.gamma));
      report_evidence_table(t, "kernel lengthscale");
      if (!o.tuning_out.empty()) tuning::write_table_csv(t, o.tuning_out + "_lengthscale.csv", "lengthscale");
      ls = t.best_value;
    }
    const auto kernel = gp::SqExpKernel::with_default_jitter(o.kernel_var, ls);
    kernel.validate();
    m.kernel = kernel;
    m.gamma = pick_gamma(tuning::gp_scorer(kernel, ep_config(o, 0)));
    m.train_x = ds.features;
    if (smc_backend) {
      const auto ps = smc::run_tempering_smc(gp::GpGibbsTarget(ds, kernel), smc_config(o, m.gamma));
      if (!o.particles_out.empty()) write_particles(ps, o.particles_out);
      m.mean = ps.mean();
      Eigen::LLT<Matrix> llt(gp::gram(ds.features, kernel));
      m.alpha = llt.solve(m.mean);
      m.log_evidence = ps.log_evidence();
      if (o.save_covariance) m.covariance = ps.covariance();
    } else {
      const auto post = gp::gp_ep_fit(ds, kernel, ep_config(o, m.gamma));
      if (!post.diagnostics.converged) std::cerr << "warning: EP stopped after " << post.diagnostics.sweeps << " sweeps\n";
      m.mean = post.mean;
      m.alpha = post.alpha;
      m.log_evidence = post.log_evidence;
      if (o.save_covariance) m.covariance = post.cov;
    }
  } else if (o.prior == "spikeslab") {
    m.kind = ModelKind::LinearSpikeSlab;
    SpikeSlabPrior prior{o.p.value_or(hyper.p), o.v0.value_or(hyper.v0_max), o.v1.value_or(1.0)};
    prior.validate();
    m.p = prior.p;
    m.v0 = prior.v0;
    m.v1 = prior.v1;
    if (smc_backend) {
      m.gamma = pick_gamma(tuning::smc_scorer(prior, smc_config(o, 0)));
      const auto ps = smc::run_tempering_smc(LinearGibbsTarget<SpikeSlabPrior>(ds, prior), smc_config(o, m.gamma));
      if (!o.particles_out.empty()) write_particles(ps, o.particles_out);
      m.mean = ps.mean();
      m.inclusion = smc_inclusion(ps, prior);
      m.log_evidence = ps.log_evidence();
      if (o.save_covariance) m.covariance = ps.covariance();
    } else {
      m.gamma = pick_gamma(tuning::ep_spike_slab_scorer(prior, ep_config(o, 0)));
      const auto fit = ep::ep_fit_spike_slab(ds, prior, ep_config(o, m.gamma));
      if (!fit.diagnostics.converged) std::cerr << "warning: EP stopped after " << fit.diagnostics.sweeps << " sweeps\n";
      m.mean = fit.approx.gaussian.mean;
      m.inclusion = fit.approx.inclusion;
      m.log_evidence = fit.approx.gaussian.log_evidence;
      if (o.save_covariance) m.covariance = fit.approx.gaussian.cov;
    }
  } else {
    m.kind = ModelKind::LinearGaussian;
    double theta = o.theta_var.value_or(hyper.theta_variance);
    if (!o.theta_var && want_cv) {
      const auto grid = tuning::default_theta_grid(hyper.theta_variance);
      const auto t = smc_backend ? tuning::tune_theta_variance_smc(ds, grid, smc_config(o, hyper.gamma))
                                 : tuning::tune_theta_variance_ep(ds, grid, ep_config(o, hyper.gamma));
      report_evidence_table(t, "prior variance");
      if (!o.tuning_out.empty()) tuning::write_table_csv(t, o.tuning_out + "_theta.csv", "theta_variance");
      theta = t.best_value;
    }
    const GaussianPrior prior{theta};
    prior.validate();
    m.theta_variance = theta;
    if (smc_backend) {
      m.gamma = pick_gamma(tuning::smc_scorer(prior, smc_config(o, 0)));
      const auto ps = smc::run_tempering_smc(LinearGibbsTarget<GaussianPrior>(ds, prior), smc_config(o, m.gamma));
      if (!o.particles_out.empty()) write_particles(ps, o.particles_out);
      m.mean = ps.mean();
      m.log_evidence = ps.log_evidence();
      if (o.save_covariance) m.covariance = ps.covariance();
    } else {
      m.gamma = pick_gamma(tuning::ep_gaussian_scorer(prior, ep_config(o, 0)));
      const auto fit = ep::ep_fit(ds, prior, ep_config(o, m.gamma));
      if (!fit.diagnostics.converged) std::cerr << "warning: EP stopped after " << fit.diagnostics.sweeps << " sweeps\n";
      m.mean = fit.approx.mean;
      m.log_evidence = fit.approx.log_evidence;
      if (o.save_covariance) m.covariance = fit.approx.cov;
    }
  }

  const std::string out = o.out.empty() ? "model.json" : o.out;
  save_model(m, out);
  const double train_auc = auc(m.predict(raw.features), raw.labels);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << std::setprecision(10) << "kind: " << to_string(m.kind) << " (" << m.backend << ")\n"
            << "gamma: " << m.gamma << '\n'
            << "log-evidence: " << m.log_evidence << '\n'
            << "training AUC: " << train_auc << '\n'
            << std::setprecision(3) << "wall time: " << secs << " s\n"
            << "model: " << out << '\n';
  if (m.inclusion) {
    std::cout << "inclusion probabilities:\n";
    for (Eigen::Index k = 0; k < m.inclusion->size(); ++k)
      std::cout << "  " << m.feature_names[static_cast<std::size_t>(k)] << "  " << std::setprecision(4)
                << (*m.inclusion)(k) << '\n';
  }
  return 0;
}

Matrix load_for_model(const Options& o, const FittedModel& m) {
  Matrix x = o.label_col.empty() ? load_features(o.data) : load_features(o.data, o.label_col);
  if (static_cast<std::size_t>(x.cols()) != m.d())
    throw DataError("feature count mismatch: model expects " + std::to_string(m.d()) + " features, '" + o.data +
                    "' has " + std::to_string(x.cols()) + (o.label_col.empty() ? " (pass --label-col to drop a label column)" : ""));
  return x;
}

int cmd_predict(const Options& o) {
  const FittedModel m = load_model(o.model);
  const Vector s = m.predict(load_for_model(o, m));
  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw DataError("cannot write '" + o.out + "'");
  }
  std::ostream& out = o.out.empty() ? std::cout : file;
  out << std::setprecision(17) << "score\n";
  for (Eigen::Index i = 0; i < s.size(); ++i) out << s(i) << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  const FittedModel m = load_model(o.model);
  const CsvTable t = read_csv(o.data);
  if (!t.header.empty() && t.header.size() == m.d())
    throw DataError("'" + o.data + "' has no label column (" + std::to_string(m.d()) +
                    " columns, all features); eval needs labelled data");
  const LabeledDataset ds = load_labeled(o);
  if (ds.d() != m.d())
    throw DataError("feature count mismatch: model expects " + std::to_string(m.d()) + ", got " +
                    std::to_string(ds.d()));
  const auto roc = roc_auc(m.predict(ds.features), ds.labels);
  std::cout << std::setprecision(10) << "AUC: " << roc.auc << '\n';
  const std::string out = o.out.empty() ? "roc.csv" : o.out;
  write_roc_csv(roc.curve, out);
  std::cout << "ROC curve: " << out << '\n';
  return 0;
}

int cmd_benchmark(const Options& o) {
  std::vector<bench::DatasetEntry> entries;
  if (!o.manifest.empty()) entries = bench::load_manifest(o.manifest);
  if (!o.data.empty()) {
    std::string name = o.data.substr(o.data.find_last_of('/') + 1);
    name = name.substr(0, name.find('.'));
    entries.push_back({name, o.data, LabelSpec{o.label_col, o.positive_label, o.one_vs_rest}, {}, {}});
  }
  if (entries.empty()) throw UsageError("benchmark needs at least one dataset (--manifest or --data)");

  bench::BenchmarkConfig cfg;
  cfg.repetitions = o.reps;
  cfg.test_fraction = o.test_fraction;
  cfg.folds = o.folds;
  cfg.seed = o.seed;
  cfg.run_ep = o.methods.find("ep") != std::string::npos;
  cfg.run_gp = o.methods.find("gp") != std::string::npos;
  cfg.ep = ep_config(o, 0);
  if (!cfg.run_ep && !cfg.run_gp) throw UsageError("--methods must name ep and/or gp");
  if (cfg.repetitions == 0) throw UsageError("--reps must be positive");
  if (!(cfg.test_fraction > 0 && cfg.test_fraction < 1)) throw UsageError("--test-frac must lie in (0,1)");

  std::vector<bench::DatasetResult> rows;
  for (const auto& e : entries) {
    std::cerr << "benchmark: " << e.name << " (seeds " << cfg.seed << ".." << cfg.seed + cfg.repetitions - 1 << ")\n";
    try {
      const LabeledDataset ds = load_dataset(e.path, e.label);
      require_both_classes(ds);
      rows.push_back(bench::run_dataset(e.name, ds, cfg));
      for (const auto& r : rows.back().reps) {
        if (!r.ep_error.empty()) std::cerr << "  seed " << r.seed << " EP failed: " << r.ep_error << '\n';
        if (!r.gp_error.empty()) std::cerr << "  seed " << r.seed << " GPEP failed: " << r.gp_error << '\n';
      }
    } catch (const std::exception& ex) {
      bench::DatasetResult failed;
      failed.name = e.name;
      failed.error = ex.what();
      rows.push_back(std::move(failed));
      std::cerr << "  " << e.name << " failed: " << ex.what() << '\n';
    }
  }
  std::cout << bench::format_table(rows);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].reference_ep_auc || entries[i].reference_gp_auc) {
      std::cout << "reference " << entries[i].name << ": EP-AUC "
                << (entries[i].reference_ep_auc ? std::to_string(*entries[i].reference_ep_auc) : "-") << ", GPEP-AUC "
                << (entries[i].reference_gp_auc ? std::to_string(*entries[i].reference_gp_auc) : "-") << '\n';
    }
  }
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    if (!out) throw DataError("cannot write '" + o.out + "'");
    out << std::setprecision(17) << "dataset,seed,ep_auc,gp_auc\n";
    for (const auto& r : rows)
      for (const auto& rep : r.reps) {
        out << r.name << ',' << rep.seed << ',';
        if (rep.ep_auc) out << *rep.ep_auc;
        out << ',';
        if (rep.gp_auc) out << *rep.gp_auc;
        out << '\n';
      }
  }
  return 0;
}

int cmd_select_features(const Options& o) {
  const auto [ds, params] = standardize(load_labeled(o));
  const auto hyper = default_hyperparameters(ds.n(), ds.d());
  const std::optional<double> g = parse_gamma(o.gamma);
  const double gamma = g.value_or(hyper.gamma);
  SpikeSlabPrior base{o.p.value_or(hyper.p), 0.0, o.v1.value_or(1.0)};
  std::vector<double> grid = o.v0_grid.empty() ? ep::default_v0_grid() : o.v0_grid;
  const auto path = ep::regularization_path(ds, base, grid, ep_config(o, gamma));
  std::cout << std::setprecision(4) << "gamma: " << gamma << ", p: " << base.p << ", v1: " << base.v1 << '\n';
  for (const auto& pt : path) {
    std::cout << "v0 = " << std::setw(10) << pt.v0 << ":";
    if (!pt.ok) {
      std::cout << " failed (" << pt.error << ")\n";
      continue;
    }
    for (std::size_t k : pt.selected) std::cout << ' ' << ds.feature_names[k];
    std::cout << '\n';
  }
  const ep::PathPoint* best = nullptr;
  for (const auto& pt : path)
    if (pt.ok && (!best || pt.log_evidence > best->log_evidence)) best = &pt;
  if (best) std::cout << "largest evidence at v0 = " << best->v0 << " (log-evidence " << best->log_evidence << ")\n";
  const std::string out = o.out.empty() ? "path.csv" : o.out;
  ep::write_path_csv(path, out);
  std::cout << "path: " << out << '\n';
  return 0;
}

int cmd_compare_backends(const Options& o) {
  const auto [ds, params] = standardize(load_labeled(o));
  const auto hyper = default_hyperparameters(ds.n(), ds.d());
  const GaussianPrior prior{o.theta_var.value_or(hyper.theta_variance)};
  double gamma;
  if (auto g = parse_gamma(o.gamma)) {
    gamma = *g;
  } else {
    const auto cv = tuning::cross_validate_gamma(ds, tuning::default_gamma_grid(ds.n()), o.folds, o.seed,
                                                 tuning::ep_gaussian_scorer(prior, ep_config(o, 0)));
    report_cv(cv);
    gamma = cv.best_gamma;
  }
  const auto fit = ep::ep_fit(ds, prior, ep_config(o, gamma));
  const auto ps = smc::run_tempering_smc(LinearGibbsTarget<GaussianPrior>(ds, prior), smc_config(o, gamma));
  const Vector sm = ps.mean(), ss = ps.sd();
  std::cout << std::setprecision(6) << "gamma: " << gamma << "  prior variance: " << prior.variance << '\n'
            << "log-evidence  EP " << fit.approx.log_evidence << "  SMC " << ps.log_evidence() << '\n'
            << "feature\tEP mean\tSMC mean\tEP sd\tSMC sd\n";
  for (std::size_t k = 0; k < ds.d(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    std::cout << ds.feature_names[k] << '\t' << fit.approx.mean(i) << '\t' << sm(i) << '\t'
              << std::sqrt(fit.approx.cov(i, i)) << '\t' << ss(i) << '\n';
  }
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    if (!out) throw DataError("cannot write '" + o.out + "'");
    out << std::setprecision(17) << "feature,ep_mean,smc_mean,ep_sd,smc_sd\n";
    for (std::size_t k = 0; k < ds.d(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      out << ds.feature_names[k] << ',' << fit.approx.mean(i) << ',' << sm(i) << ','
          << std::sqrt(fit.approx.cov(i, i)) << ',' << ss(i) << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bipartite ranking by PAC-Bayesian Gibbs pseudo-posteriors"};
  app.require_subcommand(1);
  Options o;

  auto* fit = app.add_subcommand("fit", "fit a model and write it to --out");
  add_data_options(fit, o, true);
  add_prior_options(fit, o);
  fit->add_option("--backend", o.backend, "inference backend")->check(CLI::IsMember({"ep", "smc"}))->capture_default_str();
  fit->add_option("--gamma", o.gamma, "temperature, or 'auto' for cross-validation")->capture_default_str();
  add_ep_options(fit, o);
  add_smc_options(fit, o);
  fit->add_option("--folds", o.folds, "cross-validation folds")->capture_default_str();
  fit->add_option("--seed", o.seed, "random seed")->capture_default_str();
  fit->add_option("--out", o.out, "model file (default model.json)");
  fit->add_flag("--save-covariance", o.save_covariance, "store the posterior covariance in the model file");
  fit->add_flag("--no-standardize", o.no_standardize, "use features as given");
  fit->add_option("--particles-out", o.particles_out, "CSV dump of the final SMC particles");
  fit->add_option("--tuning-out", o.tuning_out, "prefix for evidence/CV table CSVs");

  auto* predict = app.add_subcommand("predict", "score rows with a saved model");
  predict->add_option("--model", o.model, "model file")->required();
  predict->add_option("--data", o.data, "CSV file")->required();
  predict->add_option("--label-col", o.label_col, "column to drop before scoring");
  predict->add_option("--out", o.out, "scores CSV (default stdout)");

  auto* eval = app.add_subcommand("eval", "AUC and ROC curve of a saved model on labelled data");
  eval->add_option("--model", o.model, "model file")->required();
  add_data_options(eval, o, true);
  eval->add_option("--out", o.out, "ROC CSV (default roc.csv)");

  auto* benchmark = app.add_subcommand("benchmark", "repeated 70/30 split comparison of EP-AUC and GPEP-AUC");
  benchmark->add_option("--manifest", o.manifest, "JSON list of datasets");
  add_data_options(benchmark, o, false);
  benchmark->add_option("--reps", o.reps, "repetitions")->capture_default_str();
  benchmark->add_option("--test-frac", o.test_fraction, "held-out fraction")->capture_default_str();
  benchmark->add_option("--methods", o.methods, "comma list of ep, gp")->capture_default_str();
  benchmark->add_option("--folds", o.folds, "cross-validation folds")->capture_default_str();
  benchmark->add_option("--seed", o.seed, "first split seed")->capture_default_str();
  add_ep_options(benchmark, o);
  benchmark->add_option("--out", o.out, "per-repetition CSV");

  auto* select = app.add_subcommand("select-features", "spike-and-slab regularization path over v0");
  add_data_options(select, o, true);
  select->add_option("--gamma", o.gamma, "temperature ('auto' uses the default recipe)")->capture_default_str();
  select->add_option("--p", o.p, "prior inclusion probability");
  select->add_option("--v1", o.v1, "slab variance");
  select->add_option("--v0", o.v0_grid, "descending spike variances")->delimiter(',');
  add_ep_options(select, o);
  select->add_option("--out", o.out, "path CSV (default path.csv)");

  auto* compare = app.add_subcommand("compare-backends", "EP and SMC moments for the Gaussian prior");
  add_data_options(compare, o, true);
  compare->add_option("--gamma", o.gamma, "temperature, or 'auto' for cross-validation")->capture_default_str();
  compare->add_option("--theta-var", o.theta_var, "Gaussian prior variance");
  add_ep_options(compare, o);
  add_smc_options(compare, o);
  compare->add_option("--folds", o.folds, "cross-validation folds")->capture_default_str();
  compare->add_option("--seed", o.seed, "random seed")->capture_default_str();
  compare->add_option("--out", o.out, "comparison CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*fit) return cmd_fit(o);
    if (*predict) return cmd_predict(o);
    if (*eval) return cmd_eval(o);
    if (*benchmark) return cmd_benchmark(o);
    if (*select) return cmd_select_features(o);
    if (*compare) return cmd_compare_backends(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
