#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairscope/design.hpp"
#include "fairscope/error.hpp"
#include "fairscope/parallel.hpp"

namespace fairscope {

// k-nearest-neighbor regressor. Features are the dummy-coded covariates
// (no intercept), standardized, then multiplied by per-feature weights.
struct KnnModel {
  std::string yName;
  std::size_t k = 25;
  DesignEncoder encoder;
  std::map<std::string, double> sourceWeights;  // by covariate name; missing = 1
  std::vector<double> columnWeights;            // by design column
  std::vector<double> means;
  std::vector<double> sds;
  RowMatrix train;  // scaled and weighted
  Eigen::VectorXd trainY;
  bool binary = false;
  std::optional<std::string> positiveLevel;

  std::size_t featureCount() const { return columnWeights.size(); }
};

inline constexpr std::size_t kDefaultK = 25;

namespace detail {

inline RowMatrix scaleForKnn(const KnnModel& m, const Eigen::MatrixXd& raw) {
  RowMatrix out(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const double w = m.columnWeights[j];
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
      out(i, j) = w * ((raw(i, j) - m.means[j]) / m.sds[j]);
  }
  return out;
}

}  // namespace detail

inline KnnModel fitKnn(const Table& t, const ModelSpec& spec, std::size_t k = kDefaultK,
                       const std::map<std::string, double>& weights = {}) {
  spec.validate(t);
  if (k == 0) throw DataError("k must be positive");
  if (k > t.nrows())
    throw DataError("k = " + std::to_string(k) + " exceeds the " + std::to_string(t.nrows()) +
                    " training rows");
  for (const auto& [name, w] : weights) {
    if (std::find(spec.xNames.begin(), spec.xNames.end(), name) == spec.xNames.end())
      throw DataError("feature weight given for unknown feature '" + name + "'");
    if (!(w >= 0.0) || !std::isfinite(w))
      throw DataError("feature weight for '" + name + "' must be a nonnegative number");
  }
  KnnModel m;
  m.yName = spec.yName;
  m.k = k;
  m.sourceWeights = weights;
  Design d = buildDesign(t, spec, false, false);
  m.encoder = d.encoder;
  m.trainY = d.y.values;
  m.binary = d.y.binary;
  m.positiveLevel = d.y.positiveLevel;
  const auto& x = d.x.matrix;
  const auto p = x.cols();
  if (p == 0) throw DataError("kNN needs at least one feature");
  m.means.resize(p);
  m.sds.resize(p);
  m.columnWeights.resize(p);
  bool anyPositive = false;
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& source = d.x.columns[j].source;
    auto it = weights.find(source);
    m.columnWeights[j] = it == weights.end() ? 1.0 : it->second;
    anyPositive = anyPositive || m.columnWeights[j] > 0.0;
    std::span<const double> col(x.col(j).data(), static_cast<std::size_t>(x.rows()));
    m.means[j] = stats::mean(col);
    const double s = x.rows() > 1 ? stats::sd(col) : 0.0;
    m.sds[j] = s > 0.0 ? s : 1.0;  // constant feature scales to 0
  }
  if (!anyPositive) throw DataError("all feature weights are zero");
  m.train = detail::scaleForKnn(m, x);
  return m;
}

// Indices of the k nearest training rows, ties broken by lower row index,
// returned in ascending index order.
inline std::vector<std::size_t> nearestRows(const KnnModel& m, const double* query) {
  const auto n = static_cast<std::size_t>(m.train.rows());
  const auto p = m.train.cols();
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = m.train.data() + static_cast<Eigen::Index>(i) * p;
    double s = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double d = row[j] - query[j];
      s += d * d;
    }
    dist[i] = s;
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  };
  const std::size_t k = std::min(m.k, n);
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k) - 1, idx.end(), less);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Mean neighbor response: a regression estimate, or the class-1 fraction
// for a binary response.
inline Eigen::VectorXd predictKnn(const KnnModel& m, const Table& rows) {
  RowMatrix q = detail::scaleForKnn(m, m.encoder.encode(rows).matrix);
  Eigen::VectorXd out(q.rows());
  parallelFor(
      static_cast<std::size_t>(q.rows()),
      [&](std::size_t r) {
        auto nn = nearestRows(m, q.data() + static_cast<Eigen::Index>(r) * q.cols());
        double s = 0.0;
        for (auto i : nn) s += m.trainY[static_cast<Eigen::Index>(i)];
        out[static_cast<Eigen::Index>(r)] = s / static_cast<double>(nn.size());
      },
      64);
  return out;
}

}  // namespace fairscope
