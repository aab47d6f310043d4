#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairscope/design.hpp"
#include "fairscope/error.hpp"
#include "fairscope/forest.hpp"
#include "fairscope/kendall.hpp"
#include "fairscope/knn.hpp"
#include "fairscope/linear.hpp"
#include "fairscope/logistic.hpp"
#include "fairscope/stats.hpp"
#include "fairscope/table.hpp"

namespace fairscope {

enum class Family { Linear, Logistic };

inline const char* familyName(Family f) { return f == Family::Linear ? "linear" : "logistic"; }

// Share of the linear predictor's variance (over the design rows) that comes
// from the columns in `sColumns`.
inline double unfairnessShare(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta,
                              const std::vector<Eigen::Index>& sColumns) {
  Eigen::VectorXd lp = x * beta;
  Eigen::VectorXd contrib = Eigen::VectorXd::Zero(x.rows());
  for (auto j : sColumns) contrib += x.col(j) * beta[j];
  auto var = [](const Eigen::VectorXd& v) {
    std::span<const double> s(v.data(), static_cast<std::size_t>(v.size()));
    return stats::variance(s);
  };
  const double total = var(lp);
  if (!(total > 0.0)) return 0.0;
  return var(contrib) / total;
}

// ---------------------------------------------------------------------------
// Ridge penalty on the S coefficients under an unfairness budget

struct LambdaStep {
  double lambda = 0.0;
  double share = 0.0;
};

struct FairRidgeModel {
  ModelSpec spec;
  Family family = Family::Linear;
  double unfairness = 1.0;
  double lambdaS = 0.0;
  double share = 0.0;  // unfairness share at lambdaS
  FitSummary fit;
  DesignEncoder encoder;
  std::vector<Eigen::Index> sColumns;
  std::vector<LambdaStep> trace;  // every penalty evaluated, in order
  std::string note;
};

inline constexpr double kLambdaMin = 1e-8;
inline constexpr double kLambdaMax = 1e8;
inline constexpr double kLambdaRelWidth = 1e-4;

namespace detail {

// Minimizes |y - X b|^2 + b' diag(ridge) b.
inline FitSummary fitRidgeLs(const DesignMatrix& d, const Eigen::VectorXd& y, const Eigen::VectorXd& ridge) {
  if (ridge.isZero(0.0)) return fitOls(d, y);
  const Eigen::MatrixXd& x = d.matrix;
  const auto n = x.rows();
  const auto p = x.cols();
  if (n <= p) throw DataError("need more rows than coefficients");
  detail::requireFullRank(d);
  Eigen::MatrixXd xtx = x.transpose() * x;
  Eigen::MatrixXd a = xtx;
  a.diagonal() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  FitSummary f;
  f.coefficientNames = d.names();
  f.estimates = ldlt.solve(x.transpose() * y);
  f.nobs = static_cast<std::size_t>(n);
  f.dfResidual = static_cast<std::size_t>(n - p);
  const Eigen::VectorXd resid = y - x * f.estimates;
  f.residualVariance = resid.squaredNorm() / static_cast<double>(n - p);
  Eigen::MatrixXd ainv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  f.covariance = f.residualVariance * ainv * xtx * ainv;
  f.covariance = 0.5 * (f.covariance + f.covariance.transpose()).eval();
  fillInference(f, false);
  return f;
}

inline FitSummary fitPenalized(Family family, const DesignMatrix& d, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& ridge) {
  if (family == Family::Linear) return fitRidgeLs(d, y, ridge);
  LogitOptions opt;
  if (!ridge.isZero(0.0)) opt.ridge = ridge;
  return fitLogit(d, y, opt);
}

}  // namespace detail

// Smallest penalty on the S-dummy coefficients whose fit keeps the S share
// of the linear predictor variance within the budget. Bisection on log lambda.
inline FairRidgeModel fitFairRidge(const Table& t, const ModelSpec& spec, double unfairness, Family family) {
  if (!(unfairness > 0.0 && unfairness <= 1.0)) throw DataError("unfairness must be in (0, 1]");
  spec.validate(t);
  if (!t.column(spec.s()).isFactor())
    throw DataError("sensitive variable '" + spec.s() + "' must be a factor");
  Design d = buildDesign(t, spec, true);
  if (family == Family::Logistic && !d.y.binary)
    throw DataError("logistic family needs a binary response");
  FairRidgeModel m;
  m.spec = spec;
  m.family = family;
  m.unfairness = unfairness;
  m.encoder = d.encoder;
  m.sColumns = d.x.columnsOf(spec.s());
  const auto p = d.x.matrix.cols();

  auto fitAt = [&](double lambda) {
    Eigen::VectorXd ridge = Eigen::VectorXd::Zero(p);
    for (auto j : m.sColumns) ridge[j] = lambda;
    FitSummary f = detail::fitPenalized(family, d.x, d.y.values, ridge);
    const double share = unfairnessShare(d.x.matrix, f.estimates, m.sColumns);
    m.trace.push_back({lambda, share});
    return std::make_pair(std::move(f), share);
  };

  auto [f0, s0] = fitAt(0.0);
  if (s0 <= unfairness) {
    m.fit = std::move(f0);
    m.share = s0;
    if (!(s0 > 0.0)) m.note = "S contributes no variance to the unpenalized fit; the budget cannot bind";
    return m;
  }
  auto [fLo, sLo] = fitAt(kLambdaMin);
  if (sLo <= unfairness) {
    m.fit = std::move(fLo);
    m.share = sLo;
    m.lambdaS = kLambdaMin;
    return m;
  }
  auto [fHi, sHi] = fitAt(kLambdaMax);
  if (sHi > unfairness) {
    m.fit = std::move(fHi);
    m.share = sHi;
    m.lambdaS = kLambdaMax;
    m.note = "budget not reached at the largest penalty";
    return m;
  }
  double lo = std::log(kLambdaMin), hi = std::log(kLambdaMax);
  FitSummary best = std::move(fHi);
  double bestShare = sHi;
  while (std::exp(hi - lo) - 1.0 > kLambdaRelWidth) {
    const double mid = 0.5 * (lo + hi);
    auto [f, s] = fitAt(std::exp(mid));
    if (s <= unfairness) {
      hi = mid;
      best = std::move(f);
      bestShare = s;
    } else {
      lo = mid;
    }
  }
  m.fit = std::move(best);
  m.share = bestShare;
  m.lambdaS = std::exp(hi);
  return m;
}

// Predicted mean (linear) or probability (logistic).
inline Eigen::VectorXd predictFairRidge(const FairRidgeModel& m, const Table& rows) {
  Eigen::VectorXd eta = m.encoder.encode(rows).matrix * m.fit.estimates;
  if (m.family == Family::Linear) return eta;
  return eta.unaryExpr([](double e) { return detail::sigmoid(e); });
}

// ---------------------------------------------------------------------------
// Explicitly deweighted features

enum class EdfMethod { Knn, Linear, Forest };

inline const char* edfMethodName(EdfMethod m) {
  switch (m) {
    case EdfMethod::Knn: return "knn";
    case EdfMethod::Linear: return "linear";
    case EdfMethod::Forest: return "forest";
  }
  return "knn";
}

struct EdfHyper {
  std::size_t k = kDefaultK;
  ForestParams forest;
};

// Linear EDF model on standardized features with per-feature ridge
// penalties; logistic when Y is binary. Zero-weight features are dropped.
struct EdfLinear {
  Family family = Family::Linear;
  DesignEncoder encoder;  // with intercept
  std::vector<double> means;
  std::vector<double> sds;
  std::vector<double> penalties;  // per design column, 0 for the intercept
  std::vector<bool> dropped;      // per design column
  FitSummary fit;                 // on standardized columns
};

struct EdfModel {
  EdfMethod method = EdfMethod::Knn;
  ModelSpec spec;  // S removed
  std::map<std::string, double> deweight;
  std::optional<KnnModel> knn;
  std::optional<EdfLinear> linear;
  std::optional<ForestModel> forest;
};

inline constexpr double kEdfEpsilon = 1e-6;

inline double edfPenalty(double n, double w) { return n * (1.0 - w) / std::max(w, kEdfEpsilon); }

namespace detail {

inline Eigen::MatrixXd edfStandardize(const EdfLinear& m, const Eigen::MatrixXd& raw) {
  Eigen::MatrixXd z(raw.rows(), 0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < raw.cols(); ++j)
    if (!m.dropped[static_cast<std::size_t>(j)]) keep.push_back(j);
  z.resize(raw.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t q = 0; q < keep.size(); ++q) {
    const auto j = keep[q];
    z.col(static_cast<Eigen::Index>(q)) =
        (raw.col(j).array() - m.means[static_cast<std::size_t>(j)]) / m.sds[static_cast<std::size_t>(j)];
  }
  return z;
}

inline EdfLinear fitEdfLinear(const Table& t, const ModelSpec& spec, const std::map<std::string, double>& w) {
  Design d = buildDesign(t, spec, false, true);
  EdfLinear m;
  m.family = d.y.binary ? Family::Logistic : Family::Linear;
  m.encoder = d.encoder;
  const auto p = d.x.matrix.cols();
  const double n = static_cast<double>(t.nrows());
  m.means.assign(static_cast<std::size_t>(p), 0.0);
  m.sds.assign(static_cast<std::size_t>(p), 1.0);
  m.penalties.assign(static_cast<std::size_t>(p), 0.0);
  m.dropped.assign(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& col = d.x.columns[static_cast<std::size_t>(j)];
    if (col.source.empty()) continue;  // intercept
    std::span<const double> v(d.x.matrix.col(j).data(), static_cast<std::size_t>(d.x.matrix.rows()));
    m.means[static_cast<std::size_t>(j)] = stats::mean(v);
    const double sd = stats::sd(v);
    if (!(sd > 0.0)) throw DataError("feature column '" + col.name() + "' is constant");
    m.sds[static_cast<std::size_t>(j)] = sd;
    auto it = w.find(col.source);
    const double weight = it == w.end() ? 1.0 : it->second;
    if (weight == 0.0)
      m.dropped[static_cast<std::size_t>(j)] = true;
    else
      m.penalties[static_cast<std::size_t>(j)] = edfPenalty(n, weight);
  }
  DesignMatrix z;
  z.interceptIncluded = true;
  std::vector<double> ridge;
  for (Eigen::Index j = 0; j < p; ++j)
    if (!m.dropped[static_cast<std::size_t>(j)]) {
      z.columns.push_back(d.x.columns[static_cast<std::size_t>(j)]);
      ridge.push_back(m.penalties[static_cast<std::size_t>(j)]);
    }
  z.matrix = edfStandardize(m, d.x.matrix);
  z.matrix.col(0).setOnes();  // intercept: mean 0 / sd 1 leaves it as ones
  Eigen::VectorXd r = Eigen::Map<Eigen::VectorXd>(ridge.data(), static_cast<Eigen::Index>(ridge.size()));
  m.fit = fitPenalized(m.family, z, d.y.values, r);
  return m;
}

}  // namespace detail

inline Eigen::VectorXd predictEdfLinear(const EdfLinear& m, const Table& rows) {
  Eigen::MatrixXd z = detail::edfStandardize(m, m.encoder.encode(rows).matrix);
  z.col(0).setOnes();
  Eigen::VectorXd eta = z * m.fit.estimates;
  if (m.family == Family::Linear) return eta;
  return eta.unaryExpr([](double e) { return detail::sigmoid(e); });
}

inline EdfModel fitEdf(const Table& t, const ModelSpec& spec, EdfMethod method,
                       const std::map<std::string, double>& deweight, EdfHyper hyper = {},
                       std::uint64_t seed = 1) {
  spec.validate(t);
  for (const auto& [name, w] : deweight) {
    if (spec.sName && name == *spec.sName)
      throw DataError("cannot deweight the sensitive variable '" + name + "'; it is already excluded");
    if (std::find(spec.xNames.begin(), spec.xNames.end(), name) == spec.xNames.end())
      throw DataError("deweighted feature '" + name + "' is not a covariate");
    if (!(w >= 0.0 && w <= 1.0)) throw DataError("weight for '" + name + "' must be in [0, 1]");
  }
  EdfModel m;
  m.method = method;
  m.spec = ModelSpec{spec.yName, std::nullopt, spec.xNames};
  m.deweight = deweight;
  switch (method) {
    case EdfMethod::Knn:
      m.knn = fitKnn(t, m.spec, hyper.k, deweight);
      break;
    case EdfMethod::Linear:
      m.linear = detail::fitEdfLinear(t, m.spec, deweight);
      break;
    case EdfMethod::Forest:
      hyper.forest.splitProbabilities = deweight;
      hyper.forest.seed = seed;
      m.forest = fitForest(t, m.spec, hyper.forest);
      break;
  }
  return m;
}

inline Eigen::VectorXd predictEdf(const EdfModel& m, const Table& rows) {
  if (m.knn) return predictKnn(*m.knn, rows);
  if (m.linear) return predictEdfLinear(*m.linear, rows);
  return predictForest(*m.forest, rows);
}

// ---------------------------------------------------------------------------
// Fairness and utility on holdout sets

using Predictor = std::function<Eigen::VectorXd(const Table&)>;
using ModelFactory = std::function<Predictor(const Table& train, std::uint64_t seed)>;

struct ReplicationResult {
  std::uint64_t seed = 0;
  std::size_t holdoutSize = 0;
  double utility = 0.0;
  double mape = 0.0;
  std::optional<double> misclassification;
  std::vector<TauResult> taus;  // per S level
  std::optional<double> maxAbsTau;
};

struct FairnessUtilityReport {
  std::string utilityMetric;  // "mape" or "misclassification"
  std::vector<std::string> levels;
  std::vector<ReplicationResult> replications;
  std::vector<std::uint64_t> seedList;
  double meanUtility = 0.0;
  std::vector<std::optional<double>> meanTau;  // per level, over defined replications
  std::optional<double> meanMaxAbsTau;
};

inline FairnessUtilityReport evaluateFairness(const Table& t, const ModelSpec& spec, const ModelFactory& factory,
                                              std::size_t replications, std::uint64_t seed,
                                              std::optional<double> holdoutFraction = std::nullopt) {
  if (replications < 1) throw DataError("need at least one replication");
  spec.validate(t);
  const std::string& s = spec.s();
  if (!t.column(s).isFactor()) throw DataError("sensitive variable '" + s + "' must be a factor");
  const bool binary = encodeResponse(t, spec.yName).binary;
  FairnessUtilityReport rep;
  rep.utilityMetric = binary ? "misclassification" : "mape";
  rep.levels = detail::observedLevels(t, s);
  for (std::size_t r = 0; r < replications; ++r) {
    ReplicationResult rr;
    rr.seed = deriveSeed(seed, r);
    rep.seedList.push_back(rr.seed);
    auto split = makeHoldout(t.nrows(), rr.seed, holdoutFraction);
    Table train = t.rows(split.trainIndices);
    Table hold = t.rows(split.holdoutIndices);
    rr.holdoutSize = hold.nrows();
    Eigen::VectorXd y = encodeResponse(hold, spec.yName).values;
    if (binary && (y.minCoeff() == y.maxCoeff()))
      throw DataError("holdout set has a single class; cannot measure misclassification");
    Predictor predict = factory(train, deriveSeed(rr.seed, 1));
    Eigen::VectorXd yhat = predict(hold);
    if (yhat.size() != y.size()) throw DataError("predictor returned the wrong number of rows");
    rr.mape = (y - yhat).cwiseAbs().mean();
    if (binary) {
      double wrong = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i) wrong += (yhat[i] > 0.5 ? 1.0 : 0.0) != y[i];
      rr.misclassification = wrong / static_cast<double>(y.size());
      rr.utility = *rr.misclassification;
    } else {
      rr.utility = rr.mape;
    }
    std::span<const double> pred(yhat.data(), static_cast<std::size_t>(yhat.size()));
    const auto& f = hold.column(s).factor();
    for (const auto& level : rep.levels) {
      std::vector<double> ind(hold.nrows());
      for (std::size_t i = 0; i < hold.nrows(); ++i) ind[i] = f.label(i) == level ? 1.0 : 0.0;
      TauResult tau = kendallTauB(pred, ind);
      if (tau.defined) rr.maxAbsTau = std::max(rr.maxAbsTau.value_or(0.0), std::fabs(tau.value));
      rr.taus.push_back(std::move(tau));
    }
    rep.replications.push_back(std::move(rr));
  }
  double u = 0.0;
  for (const auto& rr : rep.replications) u += rr.utility;
  rep.meanUtility = u / static_cast<double>(replications);
  for (std::size_t l = 0; l < rep.levels.size(); ++l) {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (const auto& rr : rep.replications)
      if (rr.taus[l].defined) {
        sum += rr.taus[l].value;
        ++cnt;
      }
    rep.meanTau.push_back(cnt ? std::optional<double>(sum / static_cast<double>(cnt)) : std::nullopt);
  }
  double sum = 0.0;
  std::size_t cnt = 0;
  for (const auto& rr : rep.replications)
    if (rr.maxAbsTau) {
      sum += *rr.maxAbsTau;
      ++cnt;
    }
  if (cnt) rep.meanMaxAbsTau = sum / static_cast<double>(cnt);
  return rep;
}

inline void writeFairnessCsv(const FairnessUtilityReport& rep, std::ostream& out) {
  out << "replication,seed,holdout_size,utility,mape,misclassification,max_abs_tau";
  for (const auto& l : rep.levels) out << ',' << detail::quoteCsv("tau." + l);
  out << '\n';
  for (std::size_t r = 0; r < rep.replications.size(); ++r) {
    const auto& rr = rep.replications[r];
    out << r + 1 << ',' << rr.seed << ',' << rr.holdoutSize << ',' << formatDouble(rr.utility) << ','
        << formatDouble(rr.mape) << ',' << (rr.misclassification ? formatDouble(*rr.misclassification) : "NA")
        << ',' << (rr.maxAbsTau ? formatDouble(*rr.maxAbsTau) : "NA");
    for (const auto& tau : rr.taus) out << ',' << (tau.defined ? formatDouble(tau.value) : "NA");
    out << '\n';
  }
}

}  // namespace fairscope
