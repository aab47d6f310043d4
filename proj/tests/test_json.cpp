#include <gtest/gtest.h>

#include "support.hpp"

using namespace fairscope;
using namespace fstest;

namespace {

Table mixed(std::uint64_t seed, std::size_t n) {
  Gen g(seed);
  std::vector<double> a(n), b(n), y(n);
  std::vector<std::string> s(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = g.normal();
    b[i] = g.uniform(0, 5);
    s[i] = g.uniform() < 0.4 ? "p" : "q";
    c[i] = g.uniform() < 0.3 ? "lo" : (g.uniform() < 0.5 ? "mid" : "hi");
    y[i] = 1 + a[i] - 0.5 * b[i] + (s[i] == "p" ? 0.7 : 0.0) + 0.3 * g.normal();
  }
  return table({num("a", a), num("b", b), fac("c", c), fac("s", s), num("y", y)});
}

Json roundTrip(const Json& j) { return Json::parse(j.dump()); }

}  // namespace

TEST(ModelJson, KnnRoundTrip) {
  Table t = mixed(1, 300);
  ModelSpec spec{"y", "s", {"a", "b", "c"}};
  KnnModel m = fitKnn(t, spec, 7, {{"b", 0.5}});
  KnnModel back = knnFromJson(roundTrip(toJson(m)));
  Table q = mixed(2, 50);
  EXPECT_EQ(toVec(predictKnn(m, q)), toVec(predictKnn(back, q)));
  EXPECT_EQ(toJson(back).dump(), toJson(m).dump());
}

TEST(ModelJson, ForestRoundTrip) {
  Table t = mixed(3, 300);
  ForestParams p;
  p.nTrees = 15;
  p.seed = 9;
  ForestModel m = fitForest(t, {"y", "s", {"a", "b", "c"}}, p);
  ForestModel back = forestFromJson(roundTrip(toJson(m)));
  Table q = mixed(4, 50);
  EXPECT_EQ(toVec(predictForest(m, q)), toVec(predictForest(back, q)));

  ForestModel cls = fitForest(t, {"c", "s", {"a", "b", "y"}}, p);
  ForestModel clsBack = forestFromJson(roundTrip(toJson(cls)));
  EXPECT_EQ(predictForestClass(cls, q), predictForestClass(clsBack, q));
}

TEST(ModelJson, LoadersRejectBadInput) {
  Table t = mixed(5, 100);
  Json knn = toJson(fitKnn(t, {"y", "s", {"a", "b"}}, 5));
  EXPECT_THROW(forestFromJson(knn), DataError);
  EXPECT_THROW(knnFromJson(Json::array()), DataError);

  Json wrongVersion = knn;
  wrongVersion["version"] = 99;
  EXPECT_THROW(knnFromJson(wrongVersion), DataError);

  Json badK = knn;
  badK["k"] = 0;
  EXPECT_THROW(knnFromJson(badK), DataError);

  Json missing = knn;
  missing.erase("train");
  EXPECT_THROW(knnFromJson(missing), DataError);

  ForestParams p;
  p.nTrees = 3;
  Json forest = toJson(fitForest(t, {"y", "s", {"a", "b"}}, p));
  Json fewer = forest;
  fewer["trees"].erase(0);
  EXPECT_THROW(forestFromJson(fewer), DataError);
  Json badNode = forest;
  badNode["trees"][0][0]["left"] = 100000;
  EXPECT_THROW(forestFromJson(badNode), DataError);
}

TEST(ReportJson, LinearSchema) {
  Table t = mixed(6, 200);
  auto m = fitLinearS(t, {"y", "s", {"a", "b"}}, false);
  Json j = toJson(m);
  EXPECT_EQ(j["y"], "y");
  EXPECT_EQ(j["s"], "s");
  ASSERT_TRUE(j.contains("coefficients"));
  EXPECT_EQ(j["coefficients"][0]["term"], "(Intercept)");
  for (const char* key : {"estimate", "std_error", "p_value"}) EXPECT_TRUE(j["coefficients"][0].contains(key));

  Json cmp = toJson(compareLevelsNoInteraction(m));
  EXPECT_EQ(cmp["scale"], "response");
  ASSERT_EQ(cmp["sComparisons"].size(), 1u);
  EXPECT_EQ(cmp["sComparisons"][0]["level_a"], "p");

  auto per = fitLinearS(t, {"y", "s", {"a", "b"}}, true);
  Json pj = toJson(per);
  EXPECT_TRUE(pj.contains("fits_by_level"));
  EXPECT_TRUE(pj["fits_by_level"].contains("q"));
  Table pts = table({num("a", {0.0, 1.0}), num("b", {2.0, 2.0})});
  Json pc = toJson(compareLevelsWithInteraction(per, pts));
  EXPECT_EQ(pc["sComparisons"][1]["point"], 2);
  EXPECT_EQ(pc["sComparisons"][1]["covariates"]["a"], "1");
}

TEST(ReportJson, NonFiniteBecomesNull) {
  FitSummary f;
  f.coefficientNames = {"x"};
  f.estimates = Eigen::VectorXd::Constant(1, std::nan(""));
  f.standardErrors = Eigen::VectorXd::Constant(1, std::numeric_limits<double>::infinity());
  f.pValues = Eigen::VectorXd::Constant(1, 0.5);
  f.covariance = Eigen::MatrixXd::Zero(1, 1);
  Json j = toJson(f);
  EXPECT_TRUE(j["coefficients"][0]["estimate"].is_null());
  EXPECT_TRUE(j["coefficients"][0]["std_error"].is_null());
  EXPECT_EQ(j["coefficients"][0]["p_value"], 0.5);
  EXPECT_NO_THROW(Json::parse(j.dump()));
}

TEST(ReportJson, CausalGraphAndMatch) {
  Gen g(7);
  auto a = g.normals(400, 0, 1);
  std::vector<double> b(400), c(400);
  for (std::size_t i = 0; i < 400; ++i) {
    b[i] = a[i] + 0.5 * g.normal();
    c[i] = b[i] + 0.5 * g.normal();
  }
  Json j = toJson(iamb(table({num("a", a), num("b", b), num("c", c)}), 0.01));
  EXPECT_EQ(j["nodes"], Json::array({"a", "b", "c"}));
  EXPECT_EQ(j["undirected"].size(), 2u);
  EXPECT_TRUE(j["directed"].empty());

  std::vector<std::string> tr(400);
  for (std::size_t i = 0; i < 400; ++i) tr[i] = a[i] > 0 ? "yes" : "no";
  auto r = matchedATE(table({num("b", b), fac("tr", tr), num("c", c)}), {"c", "tr", {"b"}}, "yes", Propensity::none());
  Json mj = toJson(r);
  for (const char* key : {"estimate", "std_error", "p_value", "n_treated", "n_matched_pairs", "n_controls_used"})
    EXPECT_TRUE(mj.contains(key)) << key;
  EXPECT_EQ(mj["treat_level"], "yes");
}
