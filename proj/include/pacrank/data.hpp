#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pacrank/errors.hpp"

namespace pacrank {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Feature matrix (one row per observation) and +1/-1 labels.
///
/// `pos_idx` and `neg_idx` are kept sorted so that every pair loop visits
/// pairs in lexicographic (positive, negative) order.
struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> pos_idx;
  std::vector<std::size_t> neg_idx;
  std::vector<std::string> feature_names;

  std::size_t n() const { return labels.size(); }
  std::size_t d() const { return static_cast<std::size_t>(features.cols()); }
  std::size_t n_pos() const { return pos_idx.size(); }
  std::size_t n_neg() const { return neg_idx.size(); }
  std::size_t n_pairs() const { return n_pos() * n_neg(); }
};

inline LabeledDataset make_dataset(Matrix features, std::vector<int> labels,
                                   std::vector<std::string> names = {}) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw DataError("feature rows (" + std::to_string(features.rows()) + ") and labels (" +
                    std::to_string(labels.size()) + ") differ in length");
  LabeledDataset ds;
  ds.features = std::move(features);
  ds.labels = std::move(labels);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] == 1)
      ds.pos_idx.push_back(i);
    else if (ds.labels[i] == -1)
      ds.neg_idx.push_back(i);
    else
      throw DataError("label at row " + std::to_string(i) + " is " +
                      std::to_string(ds.labels[i]) + ", expected -1 or +1");
  }
  if (names.empty()) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) names.push_back("x" + std::to_string(j));
  }
  ds.feature_names = std::move(names);
  return ds;
}

/// Fitting needs both classes present; loading does not.
inline void require_both_classes(const LabeledDataset& ds) {
  if (ds.n_pos() == 0 || ds.n_neg() == 0)
    throw DataError("dataset has a single class (" + std::to_string(ds.n_pos()) + " positive, " +
                    std::to_string(ds.n_neg()) + " negative); ranking needs both");
}

inline LabeledDataset subset(const LabeledDataset& ds, const std::vector<std::size_t>& rows) {
  Matrix x(rows.size(), ds.features.cols());
  std::vector<int> y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x.row(r) = ds.features.row(rows[r]);
    y[r] = ds.labels[rows[r]];
  }
  return make_dataset(std::move(x), std::move(y), ds.feature_names);
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(trim(cell));
  return out;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  double v = 0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

}  // namespace detail

struct CsvTable {
  std::vector<std::string> header;  // empty names when the file has no header row
  std::vector<std::vector<std::string>> rows;
  bool has_header = false;
  std::size_t first_data_line = 1;  // 1-based line number of rows[0]
};

/// Reads a comma-separated file. The first row is a header when some column
/// holds a non-numeric token in row 1 but a numeric one in row 2, or when
/// `force_header` is set (label column selected by name).
inline CsvTable read_csv(const std::string& path, bool force_header = false) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> raw;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    raw.push_back(detail::split_csv_line(line));
  }
  if (raw.empty()) throw DataError("'" + path + "' is empty");
  const std::size_t width = raw.front().size();
  for (std::size_t r = 0; r < raw.size(); ++r) {
    if (raw[r].size() != width)
      throw DataError("'" + path + "' row " + std::to_string(r + 1) + " has " +
                      std::to_string(raw[r].size()) + " cells, expected " + std::to_string(width));
  }

  bool header = force_header;
  if (!header && raw.size() >= 2) {
    for (std::size_t c = 0; c < width; ++c) {
      if (!detail::parse_number(raw[0][c]) && detail::parse_number(raw[1][c])) {
        header = true;
        break;
      }
    }
  }
  CsvTable t;
  t.has_header = header;
  if (header) {
    t.header = raw.front();
    t.rows.assign(raw.begin() + 1, raw.end());
    t.first_data_line = 2;
  } else {
    t.header.assign(width, "");
    t.rows = std::move(raw);
  }
  return t;
}

/// How the label column is chosen and mapped to +1/-1.
struct LabelSpec {
  /// Column name, or integer index (negative counts from the end). Empty = last column.
  std::string column;
  /// Token mapped to +1. Empty: numeric tokens 1/+1 -> +1 and 0/-1 -> -1.
  std::string positive_label;
  /// With a positive token, map every other token to -1 (one-vs-rest).
  bool one_vs_rest = false;
};

namespace detail {

inline bool looks_like_index(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-' ? 1 : 0);
  if (i == s.size()) return false;
  return std::all_of(s.begin() + static_cast<long>(i), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

inline std::size_t resolve_column(const CsvTable& t, const std::string& column) {
  const auto width = static_cast<long>(t.header.size());
  if (column.empty()) return static_cast<std::size_t>(width - 1);
  if (t.has_header) {
    auto it = std::find(t.header.begin(), t.header.end(), column);
    if (it != t.header.end()) return static_cast<std::size_t>(it - t.header.begin());
  }
  if (looks_like_index(column)) {
    long idx = std::stol(column);
    if (idx < 0) idx += width;
    if (idx < 0 || idx >= width) throw DataError("label column index " + column + " out of range");
    return static_cast<std::size_t>(idx);
  }
  throw DataError("label column '" + column + "' not found in header");
}

inline int map_label(const std::string& token, const LabelSpec& spec, std::size_t line) {
  if (spec.positive_label.empty()) {
    if (token == "1" || token == "+1") return 1;
    if (token == "-1" || token == "0") return -1;
    throw DataError("unknown label token '" + token + "' at row " + std::to_string(line) +
                    " (no positive label given; expected 1/+1/0/-1)");
  }
  return token == spec.positive_label ? 1 : -1;
}

}  // namespace detail

/// Loads a labelled CSV. Row order is preserved.
inline LabeledDataset load_dataset(const std::string& path, const LabelSpec& spec = {}) {
  const bool by_name = !spec.column.empty() && !detail::looks_like_index(spec.column);
  CsvTable t = read_csv(path, by_name);
  if (t.rows.empty()) throw DataError("'" + path + "' has no data rows");
  const std::size_t width = t.header.size();
  if (width < 2) throw DataError("'" + path + "' needs at least one feature column and a label column");
  const std::size_t lab = detail::resolve_column(t, spec.column);

  if (!spec.positive_label.empty()) {
    std::set<std::string> tokens;
    for (const auto& r : t.rows) tokens.insert(r[lab]);
    if (!tokens.count(spec.positive_label))
      throw DataError("positive label '" + spec.positive_label + "' does not occur in column " +
                      std::to_string(lab));
    if (!spec.one_vs_rest && tokens.size() > 2) {
      for (const auto& tok : tokens) {
        if (tok != spec.positive_label)
          throw DataError("unknown label token '" + tok + "': column has " + std::to_string(tokens.size()) +
                          " distinct labels (use one-vs-rest for multi-class data)");
      }
    }
  }

  Matrix x(t.rows.size(), width - 1);
  std::vector<int> y(t.rows.size());
  std::vector<std::string> names;
  for (std::size_t c = 0; c < width; ++c) {
    if (c == lab) continue;
    names.push_back(t.has_header ? t.header[c] : "x" + std::to_string(names.size()));
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::size_t line = r + t.first_data_line;
    Eigen::Index out_c = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == lab) continue;
      auto v = detail::parse_number(t.rows[r][c]);
      if (!v)
        throw DataError("non-numeric feature cell '" + t.rows[r][c] + "' at row " + std::to_string(line) +
                        ", column " + std::to_string(c + 1) +
                        (t.has_header ? " (" + t.header[c] + ")" : std::string{}));
      x(static_cast<Eigen::Index>(r), out_c++) = *v;
    }
    y[r] = detail::map_label(t.rows[r][lab], spec, line);
  }
  return make_dataset(std::move(x), std::move(y), std::move(names));
}

/// Feature-only load for prediction: every column is a feature unless a label
/// column is named, in which case it is dropped.
inline Matrix load_features(const std::string& path, const std::optional<std::string>& label_column = std::nullopt) {
  const bool by_name = label_column && !label_column->empty() && !detail::looks_like_index(*label_column);
  CsvTable t = read_csv(path, by_name);
  std::optional<std::size_t> lab;
  if (label_column) lab = detail::resolve_column(t, *label_column);
  const std::size_t width = t.header.size();
  Matrix x(t.rows.size(), width - (lab ? 1 : 0));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Eigen::Index out_c = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (lab && c == *lab) continue;
      auto v = detail::parse_number(t.rows[r][c]);
      if (!v)
        throw DataError("non-numeric feature cell '" + t.rows[r][c] + "' at row " +
                        std::to_string(r + t.first_data_line) + ", column " + std::to_string(c + 1));
      x(static_cast<Eigen::Index>(r), out_c++) = *v;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Standardization

struct StandardizationParams {
  Vector mean;
  Vector scale;                 // > 0; 1 for constant columns
  std::vector<bool> constant;   // flagged columns

  Matrix apply(const Matrix& x) const {
    if (x.cols() != mean.size())
      throw DataError("feature count mismatch: model expects " + std::to_string(mean.size()) + ", got " +
                      std::to_string(x.cols()));
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
  Matrix invert(const Matrix& z) const {
    return (z.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose();
  }
  bool any_constant() const { return std::find(constant.begin(), constant.end(), true) != constant.end(); }

  static StandardizationParams identity(std::size_t d) {
    return {Vector::Zero(static_cast<Eigen::Index>(d)), Vector::Ones(static_cast<Eigen::Index>(d)),
            std::vector<bool>(d, false)};
  }
};

inline StandardizationParams fit_standardization(const Matrix& x) {
  if (x.rows() < 2) throw DataError("standardization needs at least 2 rows");
  StandardizationParams p;
  p.mean = x.colwise().mean();
  p.scale.resize(x.cols());
  p.constant.assign(static_cast<std::size_t>(x.cols()), false);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double ss = (x.col(c).array() - p.mean(c)).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(x.rows() - 1));
    if (sd > 0 && std::isfinite(sd) && sd > 1e-14 * (1.0 + std::abs(p.mean(c)))) {
      p.scale(c) = sd;
    } else {
      p.scale(c) = 1.0;
      p.constant[static_cast<std::size_t>(c)] = true;
    }
  }
  return p;
}

/// Columns get sample mean 0 and sample standard deviation 1.
inline std::pair<LabeledDataset, StandardizationParams> standardize(const LabeledDataset& ds) {
  StandardizationParams p = fit_standardization(ds.features);
  LabeledDataset out = ds;
  out.features = p.apply(ds.features);
  return {std::move(out), std::move(p)};
}

// ---------------------------------------------------------------------------
// Cross-validation folds

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Stratified k-fold: each class is shuffled with `seed` and dealt round-robin,
/// so per-fold class counts differ by at most one.
inline std::vector<FoldSplit> stratified_folds(const LabeledDataset& ds, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw UsageError("need at least 2 folds, got " + std::to_string(k));
  if (ds.n_pos() < k || ds.n_neg() < k)
    throw DataError("class smaller than fold count: " + std::to_string(ds.n_pos()) + " positive, " +
                    std::to_string(ds.n_neg()) + " negative, k=" + std::to_string(k));
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> members(k);
  std::size_t offset = 0;
  for (const auto* cls : {&ds.pos_idx, &ds.neg_idx}) {
    std::vector<std::size_t> idx = *cls;
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < idx.size(); ++i) members[(i + offset) % k].push_back(idx[i]);
    offset += idx.size();
  }
  std::vector<FoldSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    folds[f].validation = members[f];
    std::sort(folds[f].validation.begin(), folds[f].validation.end());
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) folds[f].train.insert(folds[f].train.end(), members[g].begin(), members[g].end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

/// Stratified single train/test split with `test_fraction` of each class held out.
inline FoldSplit stratified_split(const LabeledDataset& ds, double test_fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FoldSplit s;
  for (const auto* cls : {&ds.pos_idx, &ds.neg_idx}) {
    std::vector<std::size_t> idx = *cls;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(idx.size())));
    s.validation.insert(s.validation.end(), idx.begin(), idx.begin() + static_cast<long>(n_test));
    s.train.insert(s.train.end(), idx.begin() + static_cast<long>(n_test), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

}  // namespace pacrank
