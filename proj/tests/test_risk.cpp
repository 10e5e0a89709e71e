#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "pacrank/risk.hpp"
#include "test_util.hpp"

using namespace pacrank;

namespace {

LabeledDataset four_point() { return make_dataset(Matrix::Zero(4, 1), {1, 1, -1, -1}); }

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// brute-force count over every positive-negative pair
double brute_loss(const Vector& s, const std::vector<int>& y) {
  double bad = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == -1) {
        pairs += 1;
        bad += s(static_cast<Eigen::Index>(i)) <= s(static_cast<Eigen::Index>(j));
      }
  return bad / pairs;
}

double brute_auc(const Vector& s, const std::vector<int>& y) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == -1) {
        pairs += 1;
        const double a = s(static_cast<Eigen::Index>(i)), b = s(static_cast<Eigen::Index>(j));
        good += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
      }
  return good / pairs;
}

// ordered double sum over i != j
double brute_risk(const Vector& s, const std::vector<int>& y) {
  const double n = static_cast<double>(y.size());
  double total = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (i != j && y[i] != y[j]) {
        const double si = s(static_cast<Eigen::Index>(i)), sj = s(static_cast<Eigen::Index>(j));
        // misranked when the higher label does not score strictly higher
        total += (y[i] > y[j]) ? (si <= sj) : (sj <= si);
      }
  return total / (n * (n - 1));
}

}  // namespace

TEST(MisrankLoss, FourPoint) {
  const auto ds = four_point();
  EXPECT_DOUBLE_EQ(misrank_loss(vec({0.9, 0.4, 0.6, 0.1}), ds), 0.25);
  EXPECT_DOUBLE_EQ(misrank_loss(vec({0.9, 0.8, 0.2, 0.1}), ds), 0.0);
  EXPECT_DOUBLE_EQ(misrank_loss(vec({0.3, 0.3, 0.3, 0.3}), ds), 1.0);
}

TEST(MisrankLoss, EmptyClass) {
  const auto ds = make_dataset(Matrix::Zero(2, 1), {1, 1});
  EXPECT_THROW(misrank_loss(vec({0.0, 1.0}), ds), DataError);
}

TEST(EmpiricalRisk, FourPoint) {
  const auto ds = four_point();
  EXPECT_NEAR(empirical_auc_risk(vec({0.9, 0.4, 0.6, 0.1}), ds), 1.0 / 6.0, 1e-15);
  EXPECT_DOUBLE_EQ(empirical_auc_risk(vec({0.9, 0.8, 0.2, 0.1}), ds), 0.0);
  const auto single = make_dataset(Matrix::Zero(3, 1), {1, 1, 1});
  EXPECT_DOUBLE_EQ(empirical_auc_risk(vec({1, 2, 3}), single), 0.0);
}

TEST(RocAuc, FourPoint) {
  const std::vector<int> y{1, 1, -1, -1};
  EXPECT_DOUBLE_EQ(auc(vec({0.9, 0.4, 0.6, 0.1}), y), 0.75);
  EXPECT_DOUBLE_EQ(auc(vec({-0.9, -0.4, -0.6, -0.1}), y), 0.25);
  EXPECT_DOUBLE_EQ(auc(vec({1, 1, 1, 1}), y), 0.5);
  EXPECT_THROW(auc(vec({1, 2}), std::vector<int>{1, 1}), DataError);
}

TEST(RocAuc, CurveEndpointsAndMonotone) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ds = pacrank::testing::random_labels(31, 1, static_cast<std::uint64_t>(rep));
    Vector s(31);
    for (auto& v : s) v = coarse(rng);  // plenty of ties
    const auto r = roc_auc(s, ds.labels);
    ASSERT_GE(r.curve.points.size(), 2u);
    EXPECT_EQ(r.curve.points.front().fpr, 0.0);
    EXPECT_EQ(r.curve.points.front().tpr, 0.0);
    EXPECT_EQ(r.curve.points.back().fpr, 1.0);
    EXPECT_EQ(r.curve.points.back().tpr, 1.0);
    for (std::size_t k = 1; k < r.curve.points.size(); ++k) {
      EXPECT_GE(r.curve.points[k].fpr, r.curve.points[k - 1].fpr);
      EXPECT_GE(r.curve.points[k].tpr, r.curve.points[k - 1].tpr);
    }
    EXPECT_NEAR(r.auc, brute_auc(s, ds.labels), 1e-14);
  }
}

TEST(RiskProperties, AgainstBruteForce) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> coarse(-3, 3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto ds = pacrank::testing::random_labels(23 + rep % 7, 1, static_cast<std::uint64_t>(100 + rep));
    Vector s(static_cast<Eigen::Index>(ds.n()));
    for (auto& v : s) v = rep % 2 ? z(rng) : coarse(rng);
    const double loss = misrank_loss(s, ds);
    EXPECT_NEAR(loss, brute_loss(s, ds.labels), 1e-15);
    EXPECT_NEAR(auc(s, ds.labels) + auc(Vector(-s), ds.labels), 1.0, 1e-14);
    const double n = static_cast<double>(ds.n());
    const double direct = brute_risk(s, ds.labels);
    EXPECT_NEAR(empirical_auc_risk(s, ds), direct, 1e-14);
    EXPECT_NEAR(empirical_auc_risk(s, ds), 2.0 * static_cast<double>(ds.n_pairs()) / (n * (n - 1)) * loss, 1e-15);
    // strictly increasing transforms leave both untouched
    const Vector t = s.unaryExpr([](double v) { return std::exp(3.0 * v + 1.0); });
    EXPECT_DOUBLE_EQ(misrank_loss(t, ds), loss);
    EXPECT_DOUBLE_EQ(auc(t, ds.labels), auc(s, ds.labels));
    if (rep % 2) EXPECT_NEAR(auc(s, ds.labels), 1.0 - loss, 1e-14);  // tie-free
  }
}

TEST(RocCsv, HeaderAndRows) {
  const auto r = roc_auc(vec({0.9, 0.4, 0.6, 0.1}), std::vector<int>{1, 1, -1, -1});
  const auto path = pacrank::testing::write_temp("roc.csv", "");
  write_roc_csv(r.curve, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "fpr,tpr");
  std::getline(in, line);
  EXPECT_EQ(line, "0,0");
}
