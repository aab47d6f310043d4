#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fairscope/design.hpp"
#include "fairscope/error.hpp"
#include "fairscope/stats.hpp"
#include "fairscope/table.hpp"

namespace fairscope {

// Estimates and inference for one fitted model.
struct FitSummary {
  std::vector<std::string> coefficientNames;
  Eigen::VectorXd estimates;
  Eigen::VectorXd standardErrors;
  Eigen::VectorXd pValues;
  Eigen::MatrixXd covariance;
  double residualVariance = 0.0;
  std::size_t dfResidual = 0;
  std::size_t nobs = 0;
  bool sandwichUsed = false;

  std::optional<Eigen::Index> indexOf(const std::string& name) const {
    for (std::size_t i = 0; i < coefficientNames.size(); ++i)
      if (coefficientNames[i] == name) return static_cast<Eigen::Index>(i);
    return std::nullopt;
  }
};

namespace detail {

inline constexpr double kRankThreshold = 1e-10;

inline Eigen::Index rankOf(const Eigen::MatrixXd& x) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(kRankThreshold);
  return qr.rank();
}

// First column (in design order) that is a linear combination of earlier ones.
inline std::string offendingColumn(const DesignMatrix& d) {
  for (Eigen::Index j = 0; j < d.matrix.cols(); ++j)
    if (rankOf(d.matrix.leftCols(j + 1)) < j + 1) return d.columns[j].name();
  return d.columns.empty() ? std::string() : d.columns.back().name();
}

inline void requireFullRank(const DesignMatrix& d) {
  if (rankOf(d.matrix) < d.matrix.cols()) {
    auto col = offendingColumn(d);
    throw RankDeficiencyError(col, "design matrix is rank deficient: column '" + col +
                                       "' is collinear with earlier columns");
  }
}

inline void fillInference(FitSummary& f, bool normalReference) {
  const auto p = f.estimates.size();
  f.standardErrors.resize(p);
  f.pValues.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    f.standardErrors[j] = std::sqrt(std::max(0.0, f.covariance(j, j)));
    const double t = f.estimates[j] / f.standardErrors[j];
    f.pValues[j] = normalReference ? stats::normalTwoSidedP(t)
                                   : stats::tTwoSidedP(t, static_cast<double>(f.dfResidual));
  }
}

}  // namespace detail

// Least squares by column-pivoted Householder QR. Classical covariance is
// s^2 (X'X)^-1; the sandwich option gives HC0.
inline FitSummary fitOls(const DesignMatrix& design, const Eigen::VectorXd& y,
                         bool sandwich = false) {
  const Eigen::MatrixXd& x = design.matrix;
  const auto n = x.rows();
  const auto p = x.cols();
  if (y.size() != n) throw DataError("response length does not match design rows");
  if (n <= p)
    throw DataError("need more rows (" + std::to_string(n) + ") than coefficients (" +
                    std::to_string(p) + ")");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(detail::kRankThreshold);
  if (qr.rank() < p) detail::requireFullRank(design);

  FitSummary f;
  f.coefficientNames = design.names();
  f.estimates = qr.solve(y);
  f.nobs = static_cast<std::size_t>(n);
  f.dfResidual = static_cast<std::size_t>(n - p);
  const Eigen::VectorXd resid = y - x * f.estimates;
  f.residualVariance = resid.squaredNorm() / static_cast<double>(n - p);

  // (X'X)^-1 = P R^-1 R^-T P'
  Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  Eigen::MatrixXd rinv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd inner = rinv * rinv.transpose();
  const auto& perm = qr.colsPermutation();
  Eigen::MatrixXd xtxInv = perm * inner * perm.transpose();

  if (sandwich) {
    Eigen::MatrixXd meat = x.transpose() * resid.array().square().matrix().asDiagonal() * x;
    f.covariance = xtxInv * meat * xtxInv;
    f.sandwichUsed = true;
  } else {
    f.covariance = f.residualVariance * xtxInv;
  }
  f.covariance = 0.5 * (f.covariance + f.covariance.transpose()).eval();
  detail::fillInference(f, false);
  return f;
}

// ---------------------------------------------------------------------------
// Sensitive-level comparisons

struct SComparisonRow {
  std::string levelA;
  std::string levelB;
  std::optional<std::size_t> pointIndex;
  std::vector<std::pair<std::string, std::string>> point;  // covariate -> value text
  double estimate = 0.0;
  double standardError = 0.0;
  double pValue = 1.0;

  std::string label() const { return levelA + " - " + levelB; }
};

struct SComparisonReport {
  std::string scale = "response";  // "probability" for logistic comparisons
  std::vector<SComparisonRow> rows;
};

template <typename Fit>
struct LevelFit {
  std::string level;
  Fit fit;
  DesignEncoder encoder;
};

// Either one pooled fit with S as dummies, or (interactions) one fit per S
// level on that level's rows with S removed from the design.
template <typename Fit>
struct SModel {
  ModelSpec spec;
  bool interactions = false;
  std::vector<std::string> levels;  // observed S levels, sorted
  std::optional<Fit> pooled;
  DesignEncoder pooledEncoder;
  std::vector<LevelFit<Fit>> perLevel;

  const LevelFit<Fit>& levelFit(const std::string& level) const {
    for (const auto& lf : perLevel)
      if (lf.level == level) return lf;
    throw DataError("no per-level fit for level '" + level + "'");
  }
};

namespace detail {

// Fitter: Fit(const DesignMatrix&, const Eigen::VectorXd&)
template <typename Fit, typename Fitter>
SModel<Fit> fitSModel(const Table& t, const ModelSpec& spec, bool interactions, Fitter&& fitter) {
  spec.validate(t);
  if (!t.column(spec.s()).isFactor())
    throw DataError("sensitive variable '" + spec.s() + "' must be a factor");
  SModel<Fit> m;
  m.spec = spec;
  m.interactions = interactions;
  m.levels = observedLevels(t, spec.s());
  if (m.levels.size() < 2) throw DataError("sensitive variable needs at least two levels");
  if (!interactions) {
    Design d = buildDesign(t, spec, true);
    m.pooled = fitter(d.x, d.y.values);
    m.pooledEncoder = d.encoder;
    return m;
  }
  for (const auto& level : m.levels) {
    auto rows = rowsWithLevel(t, spec.s(), level);
    Table sub = t.rows(rows);
    Design d = buildDesign(sub, spec, false);
    m.perLevel.push_back({level, fitter(d.x, d.y.values), d.encoder});
  }
  return m;
}

inline std::vector<std::pair<std::string, std::string>> describePoint(
    const Table& points, std::size_t row, const std::vector<std::string>& xNames) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& x : xNames) out.emplace_back(x, points.column(x).cellText(row));
  return out;
}

}  // namespace detail

using LinearSModel = SModel<FitSummary>;

inline LinearSModel fitLinearS(const Table& t, const ModelSpec& spec, bool interactions,
                               bool sandwich = false) {
  return detail::fitSModel<FitSummary>(
      t, spec, interactions,
      [sandwich](const DesignMatrix& x, const Eigen::VectorXd& y) { return fitOls(x, y, sandwich); });
}

// Pooled-model contrast beta_a - beta_b, the reference level's coefficient
// taken as 0. For a logistic model this is on the log-odds scale.
template <typename Fit>
SComparisonRow compareLevelPair(const SModel<Fit>& m, const std::string& a, const std::string& b) {
  if (m.interactions || !m.pooled)
    throw DataError("pairwise level contrasts need a model fitted without interactions");
  const Fit& f = *m.pooled;
  auto coefIndex = [&](const std::string& level) -> std::optional<Eigen::Index> {
    if (std::find(m.levels.begin(), m.levels.end(), level) == m.levels.end())
      throw DataError("'" + level + "' is not a level of " + m.spec.s());
    return f.indexOf(m.spec.s() + level);
  };
  auto ia = coefIndex(a);
  auto ib = coefIndex(b);
  const auto p = f.estimates.size();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  if (ia) c[*ia] += 1.0;
  if (ib) c[*ib] -= 1.0;
  SComparisonRow row;
  row.levelA = a;
  row.levelB = b;
  row.estimate = c.dot(f.estimates);
  row.standardError = std::sqrt(std::max(0.0, c.dot(f.covariance * c)));
  row.pValue = stats::normalTwoSidedP(row.estimate / row.standardError);
  return row;
}

template <typename Fit>
SComparisonReport compareLevelsNoInteraction(const SModel<Fit>& m) {
  SComparisonReport rep;
  for (std::size_t i = 0; i < m.levels.size(); ++i)
    for (std::size_t j = i + 1; j < m.levels.size(); ++j)
      rep.rows.push_back(compareLevelPair(m, m.levels[i], m.levels[j]));
  return rep;
}

// Differences in mean conditional Y between levels at user points, from the
// independent per-level fits.
inline SComparisonReport compareLevelsWithInteraction(const LinearSModel& m, const Table& points) {
  if (!m.interactions) throw DataError("comparison points need a model fitted with interactions");
  std::vector<Eigen::MatrixXd> rowsPerLevel;
  for (const auto& lf : m.perLevel) rowsPerLevel.push_back(lf.encoder.encode(points).matrix);
  SComparisonReport rep;
  for (std::size_t r = 0; r < points.nrows(); ++r) {
    auto desc = detail::describePoint(points, r, m.spec.xNames);
    for (std::size_t i = 0; i < m.perLevel.size(); ++i)
      for (std::size_t j = i + 1; j < m.perLevel.size(); ++j) {
        const auto& fa = m.perLevel[i].fit;
        const auto& fb = m.perLevel[j].fit;
        Eigen::VectorXd xa = rowsPerLevel[i].row(r).transpose();
        Eigen::VectorXd xb = rowsPerLevel[j].row(r).transpose();
        SComparisonRow row;
        row.levelA = m.perLevel[i].level;
        row.levelB = m.perLevel[j].level;
        row.pointIndex = r;
        row.point = desc;
        row.estimate = xa.dot(fa.estimates) - xb.dot(fb.estimates);
        double var = xa.dot(fa.covariance * xa) + xb.dot(fb.covariance * xb);
        row.standardError = std::sqrt(std::max(0.0, var));
        row.pValue = stats::normalTwoSidedP(row.estimate / row.standardError);
        rep.rows.push_back(std::move(row));
      }
  }
  return rep;
}

// Fitted conditional means for rows that carry X and S.
inline Eigen::VectorXd predictLinear(const LinearSModel& m, const Table& rows) {
  if (!m.interactions) return m.pooledEncoder.encode(rows).matrix * m.pooled->estimates;
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.nrows()));
  const auto& s = rows.column(m.spec.s()).factor();
  for (const auto& lf : m.perLevel) {
    auto idx = detail::rowsWithLevel(rows, m.spec.s(), lf.level);
    if (idx.empty()) continue;
    Eigen::VectorXd pred = lf.encoder.encode(rows.rows(idx)).matrix * lf.fit.estimates;
    for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(idx[k])] = pred[k];
  }
  for (std::size_t i = 0; i < rows.nrows(); ++i)
    if (std::find(m.levels.begin(), m.levels.end(), s.label(i)) == m.levels.end())
      throw DataError("level '" + s.label(i) + "' of " + m.spec.s() + " was not fitted");
  return out;
}

}  // namespace fairscope
