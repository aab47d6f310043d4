#include <gtest/gtest.h>

#include "support.hpp"

using namespace fairscope;
using namespace fstest;

namespace {

// (X'X)^-1 X'y by explicit inversion; the oracle the QR solver is checked against.
Eigen::VectorXd normalEquations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::MatrixXd xtx = x.transpose() * x;
  return xtx.inverse() * (x.transpose() * y);
}

DesignMatrix plainDesign(const Eigen::MatrixXd& m) {
  DesignMatrix d;
  d.matrix = m;
  for (Eigen::Index j = 0; j < m.cols(); ++j) d.columns.push_back({"x" + std::to_string(j), std::nullopt});
  return d;
}

// Three-level group with numeric x; intercept and slope differ by group.
Table groupedData(std::uint64_t seed, std::size_t perLevel, const std::vector<std::string>& levels,
                  const std::vector<double>& intercepts, const std::vector<double>& slopes, double noise = 1.0) {
  Gen g(seed);
  std::vector<double> x, y;
  std::vector<std::string> s;
  for (std::size_t l = 0; l < levels.size(); ++l)
    for (std::size_t i = 0; i < perLevel; ++i) {
      const double xi = g.uniform(0.0, 10.0);
      x.push_back(xi);
      y.push_back(intercepts[l] + slopes[l] * xi + noise * g.normal());
      s.push_back(levels[l]);
    }
  return table({num("y", y), num("x", x), fac("g", s)});
}

}  // namespace

TEST(Ols, ExactLine) {
  Table t = table({num("y", {2, 4, 6}), num("x", {1, 2, 3})});
  Design d = buildDesign(t, ModelSpec{"y", std::nullopt, {"x"}}, false);
  auto f = fitOls(d.x, d.y.values);
  EXPECT_NEAR(f.estimates[0], 0.0, 1e-12);
  EXPECT_NEAR(f.estimates[1], 2.0, 1e-12);
  EXPECT_NEAR(f.residualVariance, 0.0, 1e-20);
}

TEST(Ols, FrozenSmallExample) {
  // reference values from an independent OLS implementation
  Table t = table({num("y", {1.1, 1.9, 3.2, 3.8, 5.3}), num("x", {1, 2, 3, 4, 5})});
  Design d = buildDesign(t, ModelSpec{"y", std::nullopt, {"x"}}, false);
  auto f = fitOls(d.x, d.y.values);
  EXPECT_NEAR(f.estimates[0], -0.03, 1e-12);
  EXPECT_NEAR(f.estimates[1], 1.03, 1e-12);
  EXPECT_NEAR(f.standardErrors[0], 0.24447222064411883, 1e-12);
  EXPECT_NEAR(f.standardErrors[1], 0.073711147958319984, 1e-12);
  EXPECT_NEAR(f.pValues[0], 0.91009330201795713, 1e-10);
  EXPECT_NEAR(f.pValues[1], 0.00079361315683734452, 1e-12);
  EXPECT_NEAR(f.residualVariance, 0.054333333333333428, 1e-12);
  EXPECT_EQ(f.dfResidual, 3u);
  auto h = fitOls(d.x, d.y.values, true);
  EXPECT_TRUE(h.sandwichUsed);
  EXPECT_NEAR(h.standardErrors[0], 0.13203787335457914, 1e-12);
  EXPECT_NEAR(h.standardErrors[1], 0.052019227214559753, 1e-12);
}

TEST(Ols, NormalEquationsOracle) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Gen g(seed);
    const Eigen::Index n = 40, p = 4;
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      for (Eigen::Index j = 1; j < p; ++j) x(i, j) = g.normal() * (1.0 + j);
      y[i] = g.normal() * 3.0 + x.row(i).sum();
    }
    auto f = fitOls(plainDesign(x), y);
    Eigen::VectorXd oracle = normalEquations(x, y);
    EXPECT_LT(maxAbsDiff(f.estimates, oracle), 1e-8) << "seed " << seed;

    Eigen::VectorXd e = y - x * oracle;
    const double s2 = e.squaredNorm() / static_cast<double>(n - p);
    Eigen::MatrixXd inv = (x.transpose() * x).inverse();
    EXPECT_LT((f.covariance - s2 * inv).cwiseAbs().maxCoeff(), 1e-8);
    auto h = fitOls(plainDesign(x), y, true);
    Eigen::MatrixXd meat = x.transpose() * e.array().square().matrix().asDiagonal() * x;
    EXPECT_LT((h.covariance - inv * meat * inv).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Ols, ResidualOrthogonality) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Table t = groupedData(seed, 30, {"a", "b", "c"}, {1, 2, 3}, {0.5, -1, 2});
    Design d = buildDesign(t, ModelSpec{"y", "g", {"x"}}, true);
    auto f = fitOls(d.x, d.y.values);
    Eigen::VectorXd e = d.y.values - d.x.matrix * f.estimates;
    EXPECT_LT((d.x.matrix.transpose() * e).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Ols, RankDeficiencyNamesTheColumn) {
  Table t = table({num("y", {1, 2, 3, 5, 4}), num("a", {1, 2, 3, 4, 5}), num("b", {2, 4, 6, 8, 10})});
  Design d = buildDesign(t, ModelSpec{"y", std::nullopt, {"a", "b"}}, false);
  try {
    fitOls(d.x, d.y.values);
    FAIL() << "expected a rank deficiency error";
  } catch (const RankDeficiencyError& e) {
    EXPECT_EQ(e.column(), "b");
  }
}

TEST(Ols, TooFewRows) {
  Table t = table({num("y", {1, 2}), num("a", {1, 3})});
  Design d = buildDesign(t, ModelSpec{"y", std::nullopt, {"a"}}, false);
  EXPECT_THROW(fitOls(d.x, d.y.values), DataError);
}

TEST(Ols, SandwichAgreesUnderHomoscedasticity) {
  Gen g(11);
  const std::size_t n = 10000;
  std::vector<double> x1(n), x2(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = g.normal();
    x2[i] = g.uniform(-2, 2);
    y[i] = 1 + 2 * x1[i] - x2[i] + g.normal();
  }
  Table t = table({num("y", y), num("x1", x1), num("x2", x2)});
  Design d = buildDesign(t, ModelSpec{"y", std::nullopt, {"x1", "x2"}}, false);
  auto c = fitOls(d.x, d.y.values);
  auto h = fitOls(d.x, d.y.values, true);
  for (Eigen::Index j = 0; j < 3; ++j)
    EXPECT_NEAR(h.standardErrors[j] / c.standardErrors[j], 1.0, 0.02);
}

TEST(Comparisons, NoInteractionPairsAndAntisymmetry) {
  Table t = groupedData(5, 40, {"asian", "black", "white", "hisp", "other"}, {1, 2, 3, 4, 5}, {1, 1, 1, 1, 1});
  auto m = fitLinearS(t, ModelSpec{"y", "g", {"x"}}, false);
  auto rep = compareLevelsNoInteraction(m);
  EXPECT_EQ(rep.rows.size(), 10u);
  auto ab = compareLevelPair(m, "asian", "black");
  auto ba = compareLevelPair(m, "black", "asian");
  EXPECT_EQ(ab.estimate, -ba.estimate);
  EXPECT_EQ(ab.standardError, ba.standardError);
  // reference level vs b is exactly minus beta_b
  const auto& f = *m.pooled;
  auto ib = *f.indexOf("gwhite");
  EXPECT_EQ(compareLevelPair(m, "asian", "white").estimate, -f.estimates[ib]);
  EXPECT_EQ(compareLevelPair(m, "asian", "white").standardError, f.standardErrors[ib]);
}

TEST(Comparisons, ReLevelingOracle) {
  std::vector<std::string> levels{"a", "b", "c", "d"};
  Table t = groupedData(8, 25, levels, {0, 1.5, -2, 4}, {2, 2, 2, 2}, 2.0);
  auto m = fitLinearS(t, ModelSpec{"y", "g", {"x"}}, false);
  auto cmp = compareLevelPair(m, "c", "b");
  // rename b so it becomes the lexicographically first (reference) level
  std::vector<std::string> relabeled;
  const auto& f = t.column("g").factor();
  for (std::size_t i = 0; i < t.nrows(); ++i) relabeled.push_back(f.label(i) == "b" ? "0b" : f.label(i));
  Table t2 = t.withColumn(fac("g", relabeled));
  auto m2 = fitLinearS(t2, ModelSpec{"y", "g", {"x"}}, false);
  auto ic = *m2.pooled->indexOf("gc");
  EXPECT_NEAR(cmp.estimate, m2.pooled->estimates[ic], 1e-10);
  EXPECT_NEAR(cmp.standardError, m2.pooled->standardErrors[ic], 1e-10);
}

TEST(Comparisons, InteractionRowCount) {
  Table t = groupedData(9, 30, {"asian", "black", "hisp", "other", "white"}, {1, 2, 3, 4, 5}, {1, 0, 2, 1, 3});
  auto m = fitLinearS(t, ModelSpec{"y", "g", {"x"}}, true);
  std::vector<std::size_t> idx{0, 10, 100, 120, 140};
  auto rep = compareLevelsWithInteraction(m, t.rows(idx));
  EXPECT_EQ(rep.rows.size(), 50u);
  EXPECT_EQ(*rep.rows.back().pointIndex, 4u);
}

TEST(Comparisons, IdenticalSubpopulations) {
  Gen g(2);
  std::vector<double> x, y;
  std::vector<std::string> s;
  for (int i = 0; i < 50; ++i) {
    const double xi = g.uniform(0, 5), yi = 2 * xi + g.normal();
    for (const char* lvl : {"p", "q"}) {
      x.push_back(xi);
      y.push_back(yi);
      s.push_back(lvl);
    }
  }
  Table t = table({num("y", y), num("x", x), fac("g", s)});
  auto m = fitLinearS(t, ModelSpec{"y", "g", {"x"}}, true);
  auto rep = compareLevelsWithInteraction(m, t.rows(std::vector<std::size_t>{0, 7, 33}));
  for (const auto& r : rep.rows) EXPECT_NEAR(r.estimate, 0.0, 1e-10);
}

TEST(Comparisons, InteractionEqualsFullInteractionModel) {
  // X has a numeric and a factor covariate; every level of the factor occurs in every group
  Gen g(21);
  std::vector<double> x, y;
  std::vector<std::string> s, f;
  const std::vector<std::string> groups{"g1", "g2", "g3"}, fl{"lo", "mid", "hi"};
  for (std::size_t gi = 0; gi < 3; ++gi)
    for (int i = 0; i < 60; ++i) {
      const double xi = g.normal();
      const std::size_t fi = static_cast<std::size_t>(i) % 3;
      x.push_back(xi);
      f.push_back(fl[fi]);
      s.push_back(groups[gi]);
      y.push_back(double(gi) + (1.0 + double(gi)) * xi + 0.5 * double(fi) * double(gi) + g.normal());
    }
  Table t = table({num("y", y), num("x", x), fac("f", f), fac("s", s)});
  ModelSpec spec{"y", "s", {"x", "f"}};
  auto m = fitLinearS(t, spec, true);
  Eigen::VectorXd perLevel = predictLinear(m, t);

  // single fit with every X column interacted with every S indicator
  DesignMatrix base = DesignEncoder::learn(t, spec.xNames, true).encode(t);
  const auto n = base.matrix.rows(), p = base.matrix.cols();
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, 3 * p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto gi = static_cast<Eigen::Index>(std::find(groups.begin(), groups.end(), s[static_cast<std::size_t>(i)]) - groups.begin());
    full.block(i, gi * p, 1, p) = base.matrix.row(i);
  }
  Eigen::VectorXd yv = Eigen::Map<Eigen::VectorXd>(y.data(), n);
  auto ff = fitOls(plainDesign(full), yv);
  Eigen::VectorXd pooled = full * ff.estimates;
  EXPECT_LT(maxAbsDiff(perLevel, pooled), 1e-8);
}

TEST(Comparisons, MonteCarloCoverage) {
  // true gap at x0 between levels a and b: (1 + 0.5 x0) - (3 - 0.2 x0)
  const double x0 = 4.0;
  const double gap = (1.0 + 0.5 * x0) - (3.0 - 0.2 * x0);
  Table point = table({num("y", {0.0}), num("x", {x0}), fac("g", {"a"})});
  const int reps = 500;
  int covered = 0;
  for (int r = 0; r < reps; ++r) {
    Table t = groupedData(1000 + static_cast<std::uint64_t>(r), 80, {"a", "b"}, {1.0, 3.0}, {0.5, -0.2}, 1.5);
    auto m = fitLinearS(t, ModelSpec{"y", "g", {"x"}}, true);
    auto row = compareLevelsWithInteraction(m, point).rows.at(0);
    const double z = stats::normalQuantile(0.975);
    if (std::fabs(row.estimate - gap) <= z * row.standardError) ++covered;
  }
  const double rate = covered / double(reps);
  EXPECT_NEAR(rate, 0.95, 0.03) << covered << " of " << reps;
}

TEST(Comparisons, PointsNeedEveryCovariate) {
  Table t = groupedData(3, 20, {"a", "b"}, {0, 1}, {1, 1});
  auto m = fitLinearS(t, ModelSpec{"y", "g", {"x"}}, true);
  Table bad = table({num("z", {1.0})});
  EXPECT_THROW(compareLevelsWithInteraction(m, bad), DataError);
  EXPECT_THROW(compareLevelsNoInteraction(m), DataError);
}

TEST(Comparisons, UnseenLevelInPoints) {
  Gen g(4);
  std::vector<double> x, y;
  std::vector<std::string> s, f;
  for (int i = 0; i < 40; ++i) {
    x.push_back(g.normal());
    y.push_back(g.normal());
    s.push_back(i < 20 ? "a" : "b");
    // level "z" only occurs in group b
    f.push_back(i < 20 ? (i % 2 ? "u" : "v") : (i % 3 == 0 ? "z" : (i % 2 ? "u" : "v")));
  }
  Table t = table({num("y", y), num("x", x), fac("f", f), fac("g", s)});
  auto m = fitLinearS(t, ModelSpec{"y", "g", {"x", "f"}}, true);
  Table pts = table({num("x", {0.0}), fac("f", {"z"})});
  EXPECT_THROW(compareLevelsWithInteraction(m, pts), DataError);
}
