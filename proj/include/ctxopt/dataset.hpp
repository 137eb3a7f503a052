#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ctxopt/common.hpp"

namespace ctxopt {

/// A context vector x in R^p. By convention the first entry is 1.0 when the
/// model carries an intercept; nothing here enforces that.
using ContextVector = Vector;

/// Linear predictor coefficients; prediction is w^T x.
struct LinearCoefficients {
  Vector w;

  LinearCoefficients() = default;
  explicit LinearCoefficients(Vector w_) : w(std::move(w_)) {}
  Eigen::Index dim() const { return w.size(); }
};

inline double predict_linear(const LinearCoefficients& coeffs,
                             const ContextVector& x) {
  if (coeffs.w.size() != x.size())
    throw DataError("predict_linear: dimension mismatch (w has " +
                    std::to_string(coeffs.w.size()) + ", x has " +
                    std::to_string(x.size()) + ")");
  return coeffs.w.dot(x);
}

/// Paired observations (x_i, y_i): contexts as rows of `features`,
/// uncertainty outcomes as rows of `outcomes`.
class ContextDataset {
 public:
  ContextDataset() = default;
  ContextDataset(Matrix features, Matrix outcomes)
      : features_(std::move(features)), outcomes_(std::move(outcomes)) {
    if (features_.rows() == 0) throw DataError("ContextDataset: empty");
    if (features_.rows() != outcomes_.rows())
      throw DataError("ContextDataset: row count mismatch");
    if (!features_.allFinite() || !outcomes_.allFinite())
      throw DataError("ContextDataset: non-finite entries");
  }

  Eigen::Index size() const { return features_.rows(); }
  Eigen::Index feature_dim() const { return features_.cols(); }
  Eigen::Index outcome_dim() const { return outcomes_.cols(); }

  ContextVector context(Eigen::Index i) const {
    return features_.row(i).transpose();
  }
  Vector outcome(Eigen::Index i) const { return outcomes_.row(i).transpose(); }

  const Matrix& features() const { return features_; }
  const Matrix& outcomes() const { return outcomes_; }

  ContextDataset rows(const std::vector<int>& idx) const {
    Matrix f(idx.size(), features_.cols());
    Matrix o(idx.size(), outcomes_.cols());
    for (size_t k = 0; k < idx.size(); ++k) {
      f.row(k) = features_.row(idx[k]);
      o.row(k) = outcomes_.row(idx[k]);
    }
    return ContextDataset(std::move(f), std::move(o));
  }

 private:
  Matrix features_;
  Matrix outcomes_;
};

/// Bin/split protocol: the sample is cut into consecutive bins of
/// `bin_size`; each bin is randomly partitioned `repeats` times into
/// train/test with |train| = round(train_fraction * bin_size).
struct SplitPlan {
  int bin_size = 200;
  double train_fraction = 0.8;
  int repeats = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (bin_size < 2) throw DataError("SplitPlan: bin_size must be >= 2");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw DataError("SplitPlan: train_fraction must be in (0,1)");
    if (repeats < 1) throw DataError("SplitPlan: repeats must be >= 1");
  }
};

struct TrainTestSplit {
  int bin = 0;
  int repeat = 0;
  std::vector<int> train_rows;
  std::vector<int> test_rows;
};

namespace detail {
// Stable per-(bin,repeat) stream so splits do not depend on execution order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b) {
  std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t v : {a + 1, b + 1}) {
    h ^= v * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    h ^= h >> 31;
  }
  return h;
}
}  // namespace detail

inline std::vector<TrainTestSplit> split(const ContextDataset& data,
                                         const SplitPlan& plan) {
  plan.validate();
  if (plan.bin_size > data.size())
    throw DataError("split: bin_size exceeds dataset size");
  const int bins = static_cast<int>(data.size() / plan.bin_size);
  const int n_train =
      static_cast<int>(std::lround(plan.train_fraction * plan.bin_size));

  std::vector<TrainTestSplit> out;
  out.reserve(static_cast<size_t>(bins) * plan.repeats);
  for (int b = 0; b < bins; ++b) {
    std::vector<int> rows(plan.bin_size);
    std::iota(rows.begin(), rows.end(), b * plan.bin_size);
    for (int r = 0; r < plan.repeats; ++r) {
      std::mt19937_64 rng(detail::mix_seed(plan.seed, b, r));
      std::vector<int> perm = rows;
      std::shuffle(perm.begin(), perm.end(), rng);
      TrainTestSplit s;
      s.bin = b;
      s.repeat = r;
      s.train_rows.assign(perm.begin(), perm.begin() + n_train);
      s.test_rows.assign(perm.begin() + n_train, perm.end());
      std::sort(s.train_rows.begin(), s.train_rows.end());
      std::sort(s.test_rows.begin(), s.test_rows.end());
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV format: header row x1,...,xp,y1,...,ym; one sample per row; '.' decimal.

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}
}  // namespace detail

inline void write_dataset_csv(const ContextDataset& data,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_dataset_csv: cannot open " + path);
  out.precision(17);
  for (Eigen::Index j = 0; j < data.feature_dim(); ++j)
    out << "x" << (j + 1) << ",";
  for (Eigen::Index j = 0; j < data.outcome_dim(); ++j)
    out << "y" << (j + 1) << (j + 1 < data.outcome_dim() ? "," : "");
  out << "\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.feature_dim(); ++j)
      out << data.features()(i, j) << ",";
    for (Eigen::Index j = 0; j < data.outcome_dim(); ++j)
      out << data.outcomes()(i, j) << (j + 1 < data.outcome_dim() ? "," : "");
    out << "\n";
  }
}

inline ContextDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("read_dataset_csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  Eigen::Index p = 0, m = 0;
  for (const auto& h : header) {
    if (!h.empty() && (h[0] == 'x' || h[0] == 'X')) ++p;
    else if (!h.empty() && (h[0] == 'y' || h[0] == 'Y')) ++m;
    else throw DataError("read_dataset_csv: bad header field '" + h + "'");
  }
  if (p == 0 || m == 0)
    throw DataError("read_dataset_csv: header must list x* then y* columns");

  std::vector<double> vals;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (static_cast<Eigen::Index>(fields.size()) != p + m)
      throw DataError("read_dataset_csv: row with wrong field count");
    for (const auto& f : fields) vals.push_back(std::stod(f));
    ++rows;
  }
  if (rows == 0) throw DataError("read_dataset_csv: no samples");
  Matrix f(rows, p), o(rows, m);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) f(i, j) = vals[i * (p + m) + j];
    for (Eigen::Index j = 0; j < m; ++j) o(i, j) = vals[i * (p + m) + p + j];
  }
  return ContextDataset(std::move(f), std::move(o));
}

}  // namespace ctxopt
