#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace fairscope;
using namespace fstest;

TEST(LoadCsv, NumericColumn) {
  auto r = parseCsv("x\n1\n2\n3\n");
  EXPECT_EQ(r.table.nrows(), 3u);
  ASSERT_TRUE(r.table.column("x").isNumeric());
  EXPECT_EQ(r.table.column("x").numeric(), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(r.droppedRows, 0u);
}

TEST(LoadCsv, FactorLevelsAreSorted) {
  auto r = parseCsv("race1,y\nwhite,1\nblack,2\nasian,3\nwhite,4\n");
  const auto& f = r.table.column("race1").factor();
  // oracle: the sorted distinct cell set
  std::set<std::string> cells{"white", "black", "asian"};
  EXPECT_EQ(f.levels, std::vector<std::string>(cells.begin(), cells.end()));
  EXPECT_EQ(f.label(0), "white");
  EXPECT_EQ(f.label(2), "asian");
}

TEST(LoadCsv, MissingCellsDropRows) {
  auto r = parseCsv("a,b\n1,2\n3,\n5,6\nNA,8\n");
  EXPECT_EQ(r.table.nrows(), 2u);
  EXPECT_EQ(r.droppedRows, 2u);
  EXPECT_EQ(r.table.column("a").numeric(), (std::vector<double>{1, 5}));
}

TEST(LoadCsv, OneMissingRow) {
  auto r = parseCsv("a,b\n1,2\n3,\n5,6\n");
  EXPECT_EQ(r.droppedRows, 1u);
  EXPECT_EQ(r.table.nrows(), 2u);
}

TEST(LoadCsv, ScientificAndIntegers) {
  auto r = parseCsv("a\n1e3\n-2.5E-1\n+4\n");
  ASSERT_TRUE(r.table.column("a").isNumeric());
  EXPECT_EQ(r.table.column("a").numeric(), (std::vector<double>{1000.0, -0.25, 4.0}));
}

TEST(LoadCsv, OneNonNumberMakesAFactor) {
  auto r = parseCsv("a\n1\n2\nthree\n");
  EXPECT_TRUE(r.table.column("a").isFactor());
}

TEST(LoadCsv, QuotedFields) {
  auto r = parseCsv("name,v\n\"a, b\",1\n\"say \"\"hi\"\"\",2\n");
  const auto& f = r.table.column("name").factor();
  EXPECT_EQ(f.label(0), "a, b");
  EXPECT_EQ(f.label(1), "say \"hi\"");
}

TEST(LoadCsv, Errors) {
  EXPECT_THROW(parseCsv("a,b\n1,2\n3\n"), DataError);
  EXPECT_THROW(parseCsv("a,b\n1,\n"), DataError);
  EXPECT_THROW(parseCsv("a,a\n1,2\n"), DataError);
  EXPECT_THROW(parseCsv(""), DataError);
  EXPECT_THROW(loadCsv("/nonexistent/file.csv"), DataError);
}

TEST(LoadCsv, RoundTripProperty) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Gen g(seed);
    const std::size_t n = 5 + g.below(40);
    std::vector<double> a(n), b(n);
    std::vector<std::string> f(n);
    const std::vector<std::string> pool{"x", "y z", "comma,here", "q\"uote", "w"};
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = g.normal() * std::pow(10.0, static_cast<double>(g.below(12)) - 6.0);
      b[i] = static_cast<double>(g.below(100));
      f[i] = pool[g.below(pool.size())];
    }
    Table t = table({num("a", a), num("b", b), fac("f", f)});
    std::ostringstream out;
    writeCsv(t, out);
    auto back = parseCsv(out.str()).table;
    ASSERT_EQ(back.nrows(), n);
    EXPECT_EQ(back.column("a").numeric(), a);
    EXPECT_EQ(back.column("b").numeric(), b);
    EXPECT_EQ(back.column("f").factor().levels, t.column("f").factor().levels);
    EXPECT_EQ(back.column("f").factor().codes, t.column("f").factor().codes);
  }
}

TEST(LoadCsv, FromFile) {
  auto path = std::filesystem::temp_directory_path() / "fairscope_load_test.csv";
  {
    std::ofstream out(path);
    out << "x,g\n1,a\n2,b\n";
  }
  auto r = loadCsv(path.string());
  EXPECT_EQ(r.table.nrows(), 2u);
  EXPECT_EQ(r.table.name(), "fairscope_load_test");
  std::filesystem::remove(path);
}

namespace {

Table raceTable() {
  std::vector<std::string> race{"white", "black", "asian", "hisp", "other", "white", "black", "asian"};
  std::vector<double> lsat{40, 35, 38, 33, 36, 41, 30, 39};
  std::vector<double> ugpa{3.5, 3.1, 3.3, 2.9, 3.0, 3.7, 2.8, 3.4};
  return table({num("lsat", lsat), num("ugpa", ugpa), fac("race1", race)});
}

}  // namespace

TEST(BuildDesign, FactorDummiesDropReference) {
  Table t = raceTable();
  ModelSpec spec{"lsat", "race1", {"ugpa"}};
  Design d = buildDesign(t, spec, true);
  EXPECT_EQ(d.x.names(), (std::vector<std::string>{"(Intercept)", "ugpa", "race1black", "race1hisp",
                                                    "race1other", "race1white"}));
  EXPECT_TRUE(d.x.interceptIncluded);
  EXPECT_EQ(d.x.matrix.col(0), Eigen::VectorXd::Ones(8));
}

TEST(BuildDesign, AllNumericWithoutS) {
  Table t = raceTable();
  ModelSpec spec{"lsat", "race1", {"ugpa"}};
  Design d = buildDesign(t, spec, false);
  EXPECT_EQ(d.x.matrix.cols(), 2);
  EXPECT_EQ(d.x.matrix.col(1), Eigen::Map<const Eigen::VectorXd>(t.column("ugpa").numeric().data(), 8));
}

TEST(BuildDesign, BinaryFactorResponse) {
  Table t = table({fac("result", {"pass", "fail", "fail", "pass"}), num("x", {1, 2, 3, 4})});
  Design d = buildDesign(t, ModelSpec{"result", std::nullopt, {"x"}}, false);
  EXPECT_TRUE(d.y.binary);
  EXPECT_EQ(*d.y.positiveLevel, "pass");
  EXPECT_EQ(toVec(d.y.values), (std::vector<double>{1, 0, 0, 1}));
}

TEST(BuildDesign, Errors) {
  Table single = table({num("y", {1, 2, 3}), fac("g", {"a", "a", "a"})});
  EXPECT_THROW(buildDesign(single, ModelSpec{"y", std::nullopt, {"g"}}, false), DataError);
  Table three = table({fac("y", {"a", "b", "c"}), num("x", {1, 2, 3})});
  EXPECT_THROW(buildDesign(three, ModelSpec{"y", std::nullopt, {"x"}}, false), DataError);
  Table t = raceTable();
  EXPECT_THROW(buildDesign(t, ModelSpec{"lsat", "race1", {"race1"}}, false), DataError);
  EXPECT_THROW(buildDesign(t, ModelSpec{"lsat", "lsat", {}}, false), DataError);
  EXPECT_THROW(buildDesign(t, ModelSpec{"nope", std::nullopt, {}}, false), DataError);
}

TEST(BuildDesign, DummyReconstructionProperty) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Gen g(seed);
    const std::vector<std::string> levels{"d", "b", "a", "c"};
    std::vector<std::string> lab(60);
    for (auto& l : lab) l = levels[g.below(levels.size())];
    Table t = table({num("y", g.normals(60)), fac("f", lab)});
    Design d = buildDesign(t, ModelSpec{"y", std::nullopt, {"f"}}, false);
    auto cols = d.x.columnsOf("f");
    ASSERT_EQ(cols.size(), 3u);
    for (std::size_t i = 0; i < 60; ++i) {
      double sum = 0.0;
      for (auto c : cols) {
        const double v = d.x.matrix(static_cast<Eigen::Index>(i), c);
        EXPECT_TRUE(v == 0.0 || v == 1.0);
        sum += v;
      }
      EXPECT_TRUE(sum == 0.0 || sum == 1.0);
      EXPECT_EQ(sum == 0.0, lab[i] == "a");
    }
  }
}

TEST(Standardize, HandExample) {
  std::vector<double> x{1, 2, 3};
  auto s = standardize(x);
  EXPECT_EQ(s.values, (std::vector<double>{-1, 0, 1}));
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.sd, 1.0);
}

TEST(Standardize, IdempotentAndMoments) {
  Gen g(3);
  auto x = g.normals(500, 10.0, 3.0);
  auto s = standardize(x);
  EXPECT_NEAR(stats::mean(s.values), 0.0, 1e-12);
  EXPECT_NEAR(stats::sd(s.values), 1.0, 1e-12);
  auto s2 = standardize(s.values);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(s2.values[i], s.values[i], 1e-12);
}

TEST(Standardize, ConstantIsAnError) {
  std::vector<double> x{5, 5, 5};
  EXPECT_THROW(standardize(x), DataError);
}

TEST(Holdout, DefaultSizes) {
  EXPECT_EQ(makeHoldout(20090, 1).holdoutIndices.size(), 1000u);
  EXPECT_EQ(makeHoldout(500, 1).holdoutIndices.size(), 50u);
  EXPECT_EQ(makeHoldout(500, 1, 0.3).holdoutIndices.size(), 150u);
}

TEST(Holdout, DeterministicAndDisjoint) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto a = makeHoldout(237, seed);
    auto b = makeHoldout(237, seed);
    EXPECT_EQ(a.holdoutIndices, b.holdoutIndices);
    std::set<std::size_t> all(a.trainIndices.begin(), a.trainIndices.end());
    for (auto i : a.holdoutIndices) EXPECT_TRUE(all.insert(i).second);
    EXPECT_EQ(all.size(), 237u);
    EXPECT_EQ(*all.rbegin(), 236u);
  }
  EXPECT_NE(makeHoldout(1000, 1).holdoutIndices, makeHoldout(1000, 2).holdoutIndices);
}

TEST(Holdout, Errors) {
  EXPECT_THROW(makeHoldout(9, 1), DataError);
  EXPECT_THROW(makeHoldout(20, 1, 0.01), DataError);
  EXPECT_THROW(makeHoldout(20, 1, 1.0), DataError);
}

TEST(Holdout, UniformInclusion) {
  // each row should land in the holdout about size/n of the time
  std::vector<int> hits(50, 0);
  const int reps = 4000;
  for (int r = 0; r < reps; ++r)
    for (auto i : makeHoldout(50, static_cast<std::uint64_t>(r)).holdoutIndices) ++hits[i];
  for (int h : hits) EXPECT_NEAR(h / double(reps), 0.1, 0.025);
}
