#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "pacrank/ep_gaussian.hpp"
#include "pacrank/gp.hpp"
#include "pacrank/smc.hpp"
#include "test_util.hpp"

using namespace pacrank;
using namespace pacrank::gp;

namespace {

std::pair<LabeledDataset, LabeledDataset> halves(const LabeledDataset& all) {
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < all.n(); ++i) (i < all.n() / 2 ? a : b).push_back(i);
  return {subset(all, a), subset(all, b)};
}

double min_pos_minus_max_neg(const Vector& s, const LabeledDataset& ds) {
  double lo = 1e300, hi = -1e300;
  for (auto i : ds.pos_idx) lo = std::min(lo, s(static_cast<Eigen::Index>(i)));
  for (auto j : ds.neg_idx) hi = std::max(hi, s(static_cast<Eigen::Index>(j)));
  return lo - hi;
}

}  // namespace

TEST(Gram, Examples) {
  Matrix x(3, 2);
  x << 0, 0, 1, 1, 0, 0;
  const SqExpKernel k{2.0, 0.7, 1e-3};
  const Matrix g = gram(x, k);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(g(i, i), 2.0 + 1e-3);
  EXPECT_DOUBLE_EQ(g(0, 2), 2.0);
  EXPECT_NEAR(g(0, 1), 2.0 * std::exp(-2.0 / (2 * 0.49)), 1e-15);
  EXPECT_EQ(g, g.transpose());
}

TEST(Gram, PositiveSemidefinite) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 5; ++rep) {
    Matrix x(60, 3);
    for (auto& v : x.reshaped()) v = z(rng);
    const SqExpKernel k = SqExpKernel::with_default_jitter(1.5, 0.5 + rep);
    Matrix g = gram(x, k);
    g.diagonal().array() -= k.jitter;
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(g).eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(Gram, KernelValidation) {
  EXPECT_THROW(gram(Matrix::Zero(2, 1), SqExpKernel{0.0, 1.0, 1e-6}), UsageError);
  EXPECT_THROW(gram(Matrix::Zero(2, 1), SqExpKernel{1.0, -1.0, 1e-6}), UsageError);
  EXPECT_THROW(gram(Matrix::Zero(2, 1), SqExpKernel{1.0, 1.0, 0.0}), UsageError);
  EXPECT_THROW(cross_gram(Matrix::Zero(2, 1), Matrix::Zero(2, 2), SqExpKernel{}), DataError);
}

TEST(GpEp, GammaZeroIsPrior) {
  const auto ds = pacrank::testing::xor_synthetic(30, 1);
  ep::EpConfig cfg;
  cfg.gamma = 0;
  const auto kernel = SqExpKernel::with_default_jitter(1.0, 0.8);
  const auto post = gp_ep_fit(ds, kernel, cfg);
  EXPECT_EQ(post.diagnostics.sweeps, 1);
  EXPECT_TRUE(post.mean.isZero(0.0));
  EXPECT_LE((post.cov - gram(ds.features, kernel)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(post.log_evidence, 0.0, 1e-12);
}

TEST(GpEp, SeparableToyRanksLikeSmc) {
  Matrix x(6, 1);
  x << 2.0, 1.5, 1.0, -0.5, -1.0, -2.0;
  const auto ds = make_dataset(x, {1, 1, 1, -1, -1, -1});
  const auto kernel = SqExpKernel::with_default_jitter(1.0, 1.0);
  ep::EpConfig cfg;
  cfg.gamma = 50;
  const auto post = gp_ep_fit(ds, kernel, cfg);
  EXPECT_GT(min_pos_minus_max_neg(post.mean, ds), 0.0);
  EXPECT_EQ(auc(post.mean, ds.labels), 1.0);

  smc::SmcConfig sc;
  sc.particles = 20000;
  sc.gamma_max = 50;
  sc.seed = 2;
  const auto ps = smc::run_tempering_smc(GpGibbsTarget(ds, kernel), sc);
  const Vector smc_mean = ps.mean();
  EXPECT_GT(min_pos_minus_max_neg(smc_mean, ds), 0.0);
  // same ordering of the six latent scores
  std::vector<int> a(6), b(6);
  std::iota(a.begin(), a.end(), 0);
  b = a;
  std::sort(a.begin(), a.end(), [&](int i, int j) { return post.mean(i) < post.mean(j); });
  std::sort(b.begin(), b.end(), [&](int i, int j) { return smc_mean(i) < smc_mean(j); });
  EXPECT_EQ(a, b);
}

TEST(GpEp, XorBeatsLinear) {
  const auto ds = pacrank::testing::xor_synthetic(100, 7);
  ep::EpConfig cfg;
  cfg.gamma = 50;
  const auto post = gp_ep_fit(ds, SqExpKernel::with_default_jitter(1.0, std::sqrt(2.0)), cfg);
  EXPECT_GE(auc(post.mean, ds.labels), 0.9);
  const auto lin = ep::ep_fit(ds, GaussianPrior{1.0}, cfg);
  EXPECT_LE(auc(lin.scores(ds.features), ds.labels), 0.65);
}

TEST(GpEp, HeldOutXor) {
  const auto [train, test] = halves(pacrank::testing::xor_synthetic(200, 9));
  ep::EpConfig cfg;
  cfg.gamma = 50;
  const auto post = gp_ep_fit(train, SqExpKernel::with_default_jitter(1.0, 1.0), cfg);
  EXPECT_GE(auc(gp_predict(post, test.features), test.labels), 0.85);
}

TEST(GpEp, EvidenceDecreasesWithGamma) {
  const auto ds = pacrank::testing::xor_synthetic(40, 3);
  const auto kernel = SqExpKernel::with_default_jitter(1.0, 0.7);
  double prev = 0;
  for (double g : {1.0, 4.0, 16.0, 64.0}) {
    ep::EpConfig cfg;
    cfg.gamma = g;
    const double lz = gp_ep_fit(ds, kernel, cfg).log_evidence;
    EXPECT_LT(lz, prev);
    EXPECT_GT(lz, -g);
    prev = lz;
  }
}

TEST(GpEp, SinglePairEvidenceIsExact) {
  // with one pair the only site is s_1 - s_2 ~ N(0, K11 + K22 - 2 K12)
  Matrix x(2, 1);
  x << 0.3, -0.4;
  const auto ds = make_dataset(x, {1, -1});
  const auto kernel = SqExpKernel::with_default_jitter(1.3, 0.5);
  ep::EpConfig cfg;
  cfg.gamma = 3;
  cfg.tolerance = 1e-12;
  const auto post = gp_ep_fit(ds, kernel, cfg);
  const Matrix k = gram(x, kernel);
  const double v = k(0, 0) + k(1, 1) - 2 * k(0, 1);
  const auto t = ep::tilted_step_gaussian_moments(0.0, v, 3.0);
  EXPECT_NEAR(post.log_evidence, t.log_z, 1e-9);
  EXPECT_NEAR(post.mean(0) - post.mean(1), t.mean, 1e-9);
}

TEST(GpPredict, ReproducesTrainingMean) {
  const auto ds = pacrank::testing::xor_synthetic(30, 4);
  const SqExpKernel kernel{1.0, 0.6, 1e-10};
  ep::EpConfig cfg;
  cfg.gamma = 20;
  const auto post = gp_ep_fit(ds, kernel, cfg);
  const Vector pred = gp_predict(post, ds.features);
  EXPECT_LE((pred - post.mean).cwiseAbs().maxCoeff(), 1e-6 * kernel.signal_variance);
}

TEST(GpPredict, FarAwayGoesToZero) {
  const auto ds = pacrank::testing::xor_synthetic(30, 4);
  const auto kernel = SqExpKernel::with_default_jitter(1.0, 0.5);
  ep::EpConfig cfg;
  cfg.gamma = 20;
  const auto post = gp_ep_fit(ds, kernel, cfg);
  Matrix far(2, 2);
  far << 50, 50, -40, 30;
  EXPECT_LE(gp_predict(post, far).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(gp_predict(post, Matrix::Zero(1, 3)), DataError);
}

TEST(GpPredict, PermutationInvariance) {
  const auto ds = pacrank::testing::xor_synthetic(40, 5);
  std::vector<std::size_t> perm(ds.n());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  const auto shuffled = subset(ds, perm);
  const auto kernel = SqExpKernel::with_default_jitter(1.0, 0.7);
  ep::EpConfig cfg;
  cfg.gamma = 20;
  cfg.tolerance = 1e-12;
  cfg.max_sweeps = 2000;
  const auto a = gp_ep_fit(ds, kernel, cfg);
  const auto b = gp_ep_fit(shuffled, kernel, cfg);
  const auto probe = pacrank::testing::xor_synthetic(25, 99).features;
  EXPECT_LE((gp_predict(a, probe) - gp_predict(b, probe)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(a.log_evidence, b.log_evidence, 1e-9);
}

TEST(GpTarget, PriorAndLoss) {
  const auto ds = pacrank::testing::xor_synthetic(8, 6);
  const auto kernel = SqExpKernel::with_default_jitter(1.0, 0.7);
  const GpGibbsTarget target(ds, kernel);
  EXPECT_EQ(target.dim(), 8u);
  const Vector s = Vector::LinSpaced(8, -1, 1);
  const Matrix k = gram(ds.features, kernel);
  const Eigen::LLT<Matrix> llt(k);
  const double expect = -0.5 * s.dot(llt.solve(s)) - 0.5 * std::log(k.determinant()) - 4 * std::log(2 * std::numbers::pi);
  EXPECT_NEAR(target.log_prior(s), expect, 1e-9);
  EXPECT_EQ(target.loss(s), misrank_loss(s, ds));
}

TEST(MedianDistance, Simple) {
  Matrix x(3, 1);
  x << 0, 1, 3;
  EXPECT_DOUBLE_EQ(median_distance(x), 2.0);
}
