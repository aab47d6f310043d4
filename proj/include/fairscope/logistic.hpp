#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "fairscope/design.hpp"
#include "fairscope/error.hpp"
#include "fairscope/linear.hpp"

namespace fairscope {

struct LogitFit : FitSummary {
  int iterations = 0;
  double finalDevianceChange = 0.0;
  double deviance = 0.0;
  std::vector<double> devianceTrace;  // penalized deviance after each accepted step
};

struct LogitOptions {
  double tolerance = 1e-9;
  int maxIterations = 50;
  double separationBound = 30.0;
  // Optional per-coefficient ridge weights; objective is
  // deviance + sum_j ridge_j * beta_j^2.
  std::optional<Eigen::VectorXd> ridge;
};

namespace detail {

inline double sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// -2 log-likelihood, computed without forming log(p) for extreme eta.
inline double binomialDeviance(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta[i];
    // log(1 + exp(e)) - y e
    const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    d += softplus - y[i] * e;
  }
  return 2.0 * d;
}

}  // namespace detail

inline Eigen::VectorXd logitScore(const DesignMatrix& design, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = design.matrix * beta;
  Eigen::VectorXd p = eta.unaryExpr([](double e) { return detail::sigmoid(e); });
  return design.matrix.transpose() * (y - p);
}

// IRLS (Newton) with step-halving whenever the deviance would increase.
inline LogitFit fitLogit(const DesignMatrix& design, const Eigen::VectorXd& y,
                         const LogitOptions& opt = {}) {
  const Eigen::MatrixXd& x = design.matrix;
  const auto n = x.rows();
  const auto p = x.cols();
  if (y.size() != n) throw DataError("response length does not match design rows");
  if (n <= p) throw DataError("need more rows than coefficients for a logistic fit");
  double ones = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("logistic response must be coded 0/1");
    ones += y[i];
  }
  if (ones == 0.0 || ones == static_cast<double>(n))
    throw DataError("logistic response needs both classes present");
  detail::requireFullRank(design);

  Eigen::VectorXd ridge = opt.ridge ? *opt.ridge : Eigen::VectorXd::Zero(p);
  if (ridge.size() != p) throw DataError("ridge weight vector has the wrong length");

  // column sds, for the separation check on the standardized scale
  Eigen::VectorXd colSd(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double m = x.col(j).mean();
    colSd[j] = std::sqrt((x.col(j).array() - m).square().sum() / static_cast<double>(n - 1));
  }

  auto penalizedDeviance = [&](const Eigen::VectorXd& b) {
    return detail::binomialDeviance(x * b, y) + (ridge.array() * b.array().square()).sum();
  };

  LogitFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double dev = penalizedDeviance(beta);
  fit.devianceTrace.push_back(dev);
  Eigen::MatrixXd h;
  int polish = -1;  // Newton steps still to take after the deviance criterion is met
  bool converged = false;

  for (int it = 1; it <= opt.maxIterations; ++it) {
    Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd prob = eta.unaryExpr([](double e) { return detail::sigmoid(e); });
    Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
    if (w.maxCoeff() < 1e-300) throw SeparationError("IRLS weights underflowed (separation)");
    Eigen::VectorXd grad = x.transpose() * (y - prob) - (ridge.array() * beta.array()).matrix();
    h = x.transpose() * w.asDiagonal() * x;
    h.diagonal() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success)
      throw SeparationError("information matrix is singular (separation)");
    Eigen::VectorXd delta = ldlt.solve(grad);

    double step = 1.0;
    Eigen::VectorXd cand;
    double candDev = 0.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half, step *= 0.5) {
      cand = beta + step * delta;
      candDev = penalizedDeviance(cand);
      if (std::isfinite(candDev) && candDev <= dev) {
        accepted = true;
        break;
      }
      // Near the optimum the deviance change drowns in rounding; take the
      // full Newton step anyway when it shrinks the score.
      if (half == 0 && std::fabs(candDev - dev) <= 1e-12 * (1.0 + std::fabs(dev))) {
        Eigen::VectorXd cp = (x * cand).unaryExpr([](double e) { return detail::sigmoid(e); });
        Eigen::VectorXd cg = x.transpose() * (y - cp) - (ridge.array() * cand.array()).matrix();
        if (cg.cwiseAbs().maxCoeff() < grad.cwiseAbs().maxCoeff()) {
          accepted = true;
          break;
        }
      }
    }
    fit.iterations = it;
    if (!accepted) {
      // no descent possible: we are at the numerical floor
      converged = true;
      break;
    }
    const double change = std::fabs(dev - candDev) / (std::fabs(candDev) + 0.1);
    beta = cand;
    dev = candDev;
    fit.devianceTrace.push_back(dev);
    fit.finalDevianceChange = change;

    for (Eigen::Index j = 0; j < p; ++j) {
      if (design.interceptIncluded && j == 0) continue;
      if (std::fabs(beta[j] * colSd[j]) > opt.separationBound)
        throw SeparationError("coefficient '" + design.columns[j].name() +
                              "' diverged on the standardized scale (separation)");
    }

    if (polish > 0) {
      if (--polish == 0) {
        converged = true;
        break;
      }
    } else if (change < opt.tolerance) {
      polish = 2;
    }
  }
  if (!converged && polish < 0)
    throw ConvergenceError("logistic IRLS did not converge in " +
                           std::to_string(opt.maxIterations) + " iterations");

  Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd prob = eta.unaryExpr([](double e) { return detail::sigmoid(e); });
  Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
  h = x.transpose() * w.asDiagonal() * x;
  h.diagonal() += ridge;

  fit.coefficientNames = design.names();
  fit.estimates = beta;
  fit.nobs = static_cast<std::size_t>(n);
  fit.dfResidual = static_cast<std::size_t>(n - p);
  fit.deviance = detail::binomialDeviance(eta, y);
  fit.residualVariance = 1.0;
  fit.covariance = h.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  detail::fillInference(fit, true);
  return fit;
}

inline Eigen::VectorXd predictProb(const LogitFit& fit, const DesignMatrix& design) {
  Eigen::VectorXd eta = design.matrix * fit.estimates;
  return eta.unaryExpr([](double e) { return detail::sigmoid(e); });
}

inline Eigen::VectorXd predictProb(const LogitFit& fit, const DesignEncoder& encoder,
                                   const Table& rows) {
  return predictProb(fit, encoder.encode(rows));
}

using LogitSModel = SModel<LogitFit>;

inline LogitSModel fitLogitS(const Table& t, const ModelSpec& spec, bool interactions) {
  return detail::fitSModel<LogitFit>(
      t, spec, interactions,
      [](const DesignMatrix& x, const Eigen::VectorXd& y) { return fitLogit(x, y); });
}

// Probability-scale level differences at user points with delta-method SEs.
inline SComparisonReport compareLevelsLogit(const LogitSModel& m, const Table& points) {
  if (!m.interactions)
    throw DataError("probability-scale comparisons need per-level (interaction) fits");
  std::vector<Eigen::MatrixXd> rowsPerLevel;
  for (const auto& lf : m.perLevel) rowsPerLevel.push_back(lf.encoder.encode(points).matrix);
  SComparisonReport rep;
  rep.scale = "probability";
  for (std::size_t r = 0; r < points.nrows(); ++r) {
    auto desc = detail::describePoint(points, r, m.spec.xNames);
    for (std::size_t i = 0; i < m.perLevel.size(); ++i)
      for (std::size_t j = i + 1; j < m.perLevel.size(); ++j) {
        const auto& fa = m.perLevel[i].fit;
        const auto& fb = m.perLevel[j].fit;
        Eigen::VectorXd xa = rowsPerLevel[i].row(r).transpose();
        Eigen::VectorXd xb = rowsPerLevel[j].row(r).transpose();
        const double pa = detail::sigmoid(xa.dot(fa.estimates));
        const double pb = detail::sigmoid(xb.dot(fb.estimates));
        Eigen::VectorXd ga = pa * (1.0 - pa) * xa;
        Eigen::VectorXd gb = pb * (1.0 - pb) * xb;
        SComparisonRow row;
        row.levelA = m.perLevel[i].level;
        row.levelB = m.perLevel[j].level;
        row.pointIndex = r;
        row.point = desc;
        row.estimate = pa - pb;
        row.standardError =
            std::sqrt(std::max(0.0, ga.dot(fa.covariance * ga) + gb.dot(fb.covariance * gb)));
        row.pValue = stats::normalTwoSidedP(row.estimate / row.standardError);
        rep.rows.push_back(std::move(row));
      }
  }
  return rep;
}

}  // namespace fairscope
