#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pacrank/data.hpp"

namespace pacrank {

// Two tie conventions live here:
//  * misrank_loss (the Gibbs exponent) counts s_pos <= s_neg as misranked,
//    so a constant score is maximally penalized;
//  * roc_auc gives half credit to ties, the usual reporting convention.

namespace detail {

/// Number of (pos, neg) pairs with s_pos <= s_neg. O(n log n).
template <class Scores>
std::size_t count_misranked(const Scores& s, const std::vector<std::size_t>& pos,
                            const std::vector<std::size_t>& neg, std::vector<double>& scratch) {
  scratch.resize(neg.size());
  for (std::size_t j = 0; j < neg.size(); ++j) scratch[j] = s[static_cast<Eigen::Index>(neg[j])];
  std::sort(scratch.begin(), scratch.end());
  std::size_t bad = 0;
  for (std::size_t i : pos) {
    const double v = s[static_cast<Eigen::Index>(i)];
    // negatives with score >= v
    bad += static_cast<std::size_t>(scratch.end() - std::lower_bound(scratch.begin(), scratch.end(), v));
  }
  return bad;
}

}  // namespace detail

/// Fraction of positive-negative pairs with s_pos <= s_neg.
template <class Scores>
double misrank_loss(const Scores& scores, const LabeledDataset& ds) {
  require_both_classes(ds);
  std::vector<double> scratch;
  const auto bad = detail::count_misranked(scores, ds.pos_idx, ds.neg_idx, scratch);
  return static_cast<double>(bad) / static_cast<double>(ds.n_pairs());
}

/// R_n: misranked ordered pairs over n(n-1); same-label pairs never count.
template <class Scores>
double empirical_auc_risk(const Scores& scores, const LabeledDataset& ds) {
  const double n = static_cast<double>(ds.n());
  if (ds.n() < 2) throw DataError("empirical AUC risk needs n >= 2");
  if (ds.n_pos() == 0 || ds.n_neg() == 0) return 0.0;
  const double mixed = 2.0 * static_cast<double>(ds.n_pairs());
  return mixed / (n * (n - 1.0)) * misrank_loss(scores, ds);
}

struct RocPoint {
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;
};

struct RocResult {
  RocCurve curve;
  double auc;
};

/// ROC at every distinct threshold plus trapezoidal AUC (ties get half credit).
template <class Scores>
RocResult roc_auc(const Scores& scores, const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(scores.size()) != n) throw DataError("scores and labels differ in length");
  double P = 0, N = 0;
  for (int y : labels) (y > 0 ? P : N) += 1;
  if (P == 0 || N == 0) throw DataError("ROC needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
  });

  RocResult out;
  out.curve.points.push_back({0.0, 0.0});
  double tp = 0, fp = 0, area = 0;
  std::size_t i = 0;
  while (i < n) {
    const double thr = scores[static_cast<Eigen::Index>(order[i])];
    const double tp0 = tp, fp0 = fp;
    while (i < n && scores[static_cast<Eigen::Index>(order[i])] == thr) {
      (labels[order[i]] > 0 ? tp : fp) += 1;
      ++i;
    }
    area += (fp - fp0) * (tp + tp0) / 2.0;
    out.curve.points.push_back({fp / N, tp / P});
  }
  out.auc = area / (P * N);
  return out;
}

template <class Scores>
double auc(const Scores& scores, const std::vector<int>& labels) {
  return roc_auc(scores, labels).auc;
}

inline void write_roc_csv(const RocCurve& roc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "fpr,tpr\n" << std::setprecision(17);
  for (const auto& p : roc.points) out << p.fpr << ',' << p.tpr << '\n';
}

}  // namespace pacrank
