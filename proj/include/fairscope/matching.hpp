#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairscope/design.hpp"
#include "fairscope/error.hpp"
#include "fairscope/knn.hpp"
#include "fairscope/logistic.hpp"
#include "fairscope/parallel.hpp"
#include "fairscope/stats.hpp"
#include "fairscope/table.hpp"

namespace fairscope {

struct Propensity {
  enum class Kind { None, Logit, Knn };
  Kind kind = Kind::None;
  std::size_t k = 50;

  static Propensity none() { return {}; }
  static Propensity logit() { return {Kind::Logit, 0}; }
  static Propensity knn(std::size_t k) { return {Kind::Knn, k}; }

  std::string name() const {
    switch (kind) {
      case Kind::None: return "none";
      case Kind::Logit: return "logit";
      case Kind::Knn: return "knn";
    }
    return "none";
  }
};

struct MatchResult {
  double estimate = 0.0;
  double standardError = 0.0;
  double tStat = 0.0;
  double pValue = 1.0;
  std::size_t nOriginal = 0;
  std::size_t nTreated = 0;
  std::size_t nMatched = 0;
  std::size_t nMatchedPairs = 0;  // treated-control pairs, counting ties
  std::size_t nControlsUsed = 0;
  std::string estimand = "ATT";
  std::string propensity;
  std::string treatLevel;
};

namespace detail {

// Squared Euclidean distance between two rows of a row-major matrix.
inline double rowDistance2(const RowMatrix& a, Eigen::Index i, const RowMatrix& b, Eigen::Index j) {
  double s = 0.0;
  const double* x = a.data() + i * a.cols();
  const double* y = b.data() + j * b.cols();
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double d = x[c] - y[c];
    s += d * d;
  }
  return s;
}

// Rows of `pool` at the minimal distance from row i of `query`, in index
// order; `skip` excludes one pool row.
inline std::vector<std::size_t> nearestInPool(const RowMatrix& query, Eigen::Index i, const RowMatrix& pool,
                                              std::size_t skip = std::numeric_limits<std::size_t>::max()) {
  std::vector<std::size_t> best;
  double bestD = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < pool.rows(); ++j) {
    if (static_cast<std::size_t>(j) == skip) continue;
    const double d = rowDistance2(query, i, pool, j);
    if (d < bestD) {
      bestD = d;
      best.assign(1, static_cast<std::size_t>(j));
    } else if (d == bestD) {
      best.push_back(static_cast<std::size_t>(j));
    }
  }
  return best;
}

}  // namespace detail

// ATT by nearest-control matching with replacement. Controls tied at the
// minimal distance share the match equally (weight 1/m each), so a treated
// unit is compared with their mean outcome.
// Variance: (1/n_t^2) [ sum_i (d_i - est)^2 + sum_j (K_j^2 - L_j) s_j^2 ],
// with K_j = sum of control j's match weights, L_j = sum of their squares
// (K(K-1) without ties) and s_j^2 = J/(J+1) (y_j - mean y over the J controls
// nearest to j)^2.
inline MatchResult matchedATE(const Table& t, const ModelSpec& spec, const std::string& treatLevel,
                              Propensity propensity = Propensity::none()) {
  spec.validate(t);
  const std::string& s = spec.s();
  if (!t.column(s).isFactor()) throw DataError("treatment variable '" + s + "' must be a factor");
  auto levels = detail::observedLevels(t, s);
  if (levels.size() != 2)
    throw DataError("treatment variable '" + s + "' must have exactly two levels");
  if (std::find(levels.begin(), levels.end(), treatLevel) == levels.end())
    throw DataError("'" + treatLevel + "' is not a level of " + s);
  if (!t.column(spec.yName).isNumeric()) throw DataError("outcome '" + spec.yName + "' must be numeric");
  if (spec.xNames.empty()) throw DataError("matching needs at least one covariate");

  const auto treated = detail::rowsWithLevel(t, s, treatLevel);
  std::vector<std::size_t> controls;
  {
    const auto& f = t.column(s).factor();
    for (std::size_t i = 0; i < t.nrows(); ++i)
      if (f.label(i) != treatLevel) controls.push_back(i);
  }
  if (controls.size() < 2) throw DataError("need at least two control rows");
  const auto& y = t.column(spec.yName).numeric();

  // metric space: standardized covariates, or a 1-column propensity score
  RowMatrix space;
  if (propensity.kind == Propensity::Kind::None) {
    DesignEncoder enc = DesignEncoder::learn(t, spec.xNames, false);
    Eigen::MatrixXd x = enc.encode(t).matrix;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      std::span<const double> col(x.col(j).data(), static_cast<std::size_t>(x.rows()));
      const double sd = stats::sd(col);
      if (sd > 0.0) x.col(j) /= sd;
    }
    space = x;
  } else {
    Table withT = t.withColumn(Column(
        "__treated", NumericData([&] {
          NumericData v(t.nrows(), 0.0);
          for (auto i : treated) v[i] = 1.0;
          return v;
        }())));
    ModelSpec ps{"__treated", std::nullopt, spec.xNames};
    Eigen::VectorXd score;
    if (propensity.kind == Propensity::Kind::Logit) {
      Design d = buildDesign(withT, ps, false, true);
      LogitFit fit = fitLogit(d.x, d.y.values);
      score = predictProb(fit, d.x);
    } else {
      if (propensity.k < 1) throw DataError("propensity k must be positive");
      KnnModel knn = fitKnn(withT, ps, propensity.k);
      score = predictKnn(knn, withT);
    }
    space = score;
  }
  RowMatrix tSpace(static_cast<Eigen::Index>(treated.size()), space.cols());
  RowMatrix cSpace(static_cast<Eigen::Index>(controls.size()), space.cols());
  for (std::size_t i = 0; i < treated.size(); ++i) tSpace.row(static_cast<Eigen::Index>(i)) = space.row(static_cast<Eigen::Index>(treated[i]));
  for (std::size_t j = 0; j < controls.size(); ++j) cSpace.row(static_cast<Eigen::Index>(j)) = space.row(static_cast<Eigen::Index>(controls[j]));

  std::vector<std::vector<std::size_t>> match(treated.size());
  parallelFor(treated.size(), [&](std::size_t i) {
    match[i] = detail::nearestInPool(tSpace, static_cast<Eigen::Index>(i), cSpace);
  }, 64);

  MatchResult r;
  r.nOriginal = t.nrows();
  r.nTreated = treated.size();
  r.nMatched = treated.size();
  r.propensity = propensity.name();
  r.treatLevel = treatLevel;

  std::vector<double> diffs(treated.size());
  std::vector<double> weight(controls.size(), 0.0), weight2(controls.size(), 0.0);
  for (std::size_t i = 0; i < treated.size(); ++i) {
    const double w = 1.0 / static_cast<double>(match[i].size());
    double y0 = 0.0;
    for (auto j : match[i]) {
      y0 += w * y[controls[j]];
      weight[j] += w;
      weight2[j] += w * w;
    }
    diffs[i] = y[treated[i]] - y0;
    r.nMatchedPairs += match[i].size();
  }
  r.estimate = stats::mean(diffs);

  std::vector<std::size_t> multi;
  for (std::size_t j = 0; j < controls.size(); ++j) {
    if (weight[j] > 0.0) ++r.nControlsUsed;
    if (weight[j] * weight[j] - weight2[j] > 0.0) multi.push_back(j);
  }
  std::vector<double> reuseTerm(multi.size());
  parallelFor(multi.size(), [&](std::size_t q) {
    const std::size_t j = multi[q];
    const auto others = detail::nearestInPool(cSpace, static_cast<Eigen::Index>(j), cSpace, j);
    double mean = 0.0;
    for (auto o : others) mean += y[controls[o]];
    const double m = static_cast<double>(others.size());
    mean /= m;
    const double dy = y[controls[j]] - mean;
    const double s2 = m / (m + 1.0) * dy * dy;
    reuseTerm[q] = (weight[j] * weight[j] - weight2[j]) * s2;
  }, 64);
  double ss = 0.0;
  for (double d : diffs) ss += (d - r.estimate) * (d - r.estimate);
  for (double v : reuseTerm) ss += v;
  const double nt = static_cast<double>(treated.size());
  r.standardError = std::sqrt(ss) / nt;
  if (r.standardError > 0.0) {
    r.tStat = r.estimate / r.standardError;
    r.pValue = stats::normalTwoSidedP(r.tStat);
  } else if (r.estimate == 0.0) {
    r.tStat = 0.0;
    r.pValue = 1.0;
  } else {
    r.tStat = std::copysign(std::numeric_limits<double>::infinity(), r.estimate);
    r.pValue = 0.0;
  }
  return r;
}

}  // namespace fairscope
