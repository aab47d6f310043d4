#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "support.hpp"

using namespace fairscope;
using namespace fstest;

namespace {

double kdeOracle(const std::vector<double>& xs, double h, double x) {
  double s = 0.0;
  for (double v : xs) s += std::exp(-0.5 * ((x - v) / h) * ((x - v) / h)) / std::sqrt(2.0 * std::numbers::pi);
  return s / (double(xs.size()) * h);
}

Table lsaLike(std::uint64_t seed, std::size_t n) {
  Gen g(seed);
  const std::vector<std::string> races{"asian", "black", "hisp", "other", "white"};
  std::vector<double> lsat(n), ugpa(n), inc(n), bar(n);
  std::vector<std::string> race(n), gender(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = g.below(5);
    race[i] = races[r];
    gender[i] = g.uniform() < 0.45 ? "female" : "male";
    ugpa[i] = std::clamp(3.2 + 0.4 * g.normal() - 0.1 * double(r == 1), 1.5, 4.0);
    lsat[i] = std::round(30 + 5 * (ugpa[i] - 3.2) + 4 * g.normal() + 2.0 * double(r == 4));
    inc[i] = std::round(g.uniform(1, 5));
    bar[i] = g.uniform() < 0.9 ? 1.0 : 0.0;
  }
  return table({num("lsat", lsat), num("ugpa", ugpa), num("fam_inc", inc), fac("gender", gender),
                fac("race1", race), num("bar", bar)});
}

}  // namespace

TEST(Condition, Parse) {
  auto c = Condition::parse("ugpa <= 2.70");
  EXPECT_EQ(c.column, "ugpa");
  EXPECT_EQ(c.op, "<=");
  EXPECT_EQ(c.value, "2.70");
  EXPECT_EQ(Condition::parse("x>3").op, ">");
  EXPECT_EQ(Condition::parse("g == a").op, "==");
  EXPECT_THROW(Condition::parse("no operator"), DataError);
  EXPECT_THROW(Condition::parse("<= 3"), DataError);
}

TEST(Condition, Filter) {
  Table t = table({num("x", {1, 2, 3, 4}), fac("g", {"a", "b", "a", "b"})});
  EXPECT_EQ(applyConditions(t, {Condition::parse("x <= 2")}).nrows(), 2u);
  EXPECT_EQ(applyConditions(t, {Condition::parse("x > 1"), Condition::parse("g == a")}).nrows(), 1u);
  EXPECT_THROW(applyConditions(t, {Condition::parse("g < a")}), DataError);
  EXPECT_THROW(applyConditions(t, {Condition::parse("x < abc")}), DataError);
}

TEST(Disparity, ConstantResponse) {
  Table t = lsaLike(1, 600);
  t = t.withColumn(num("lsat", std::vector<double>(600, 37.5)));
  auto fig = conditDisparity(t, "lsat", "race1", "ugpa");
  ASSERT_EQ(fig.doc.layers.size(), 5u);
  for (const auto& layer : fig.doc.layers) {
    EXPECT_EQ(layer.coordinates.size(), 100u);
    for (const auto& c : layer.coordinates) EXPECT_DOUBLE_EQ(c[1], 37.5);
  }
}

TEST(Disparity, GridMatchesNeighborScan) {
  Table t = lsaLike(2, 800);
  auto fig = conditDisparity(t, "lsat", "race1", "ugpa", {"ugpa <= 3.60"}, 30);
  Table f = applyConditions(t, {Condition::parse("ugpa <= 3.60")});
  for (const auto& layer : fig.doc.layers) {
    std::vector<double> xs, ys;
    for (auto r : detail::rowsWithLevel(f, "race1", layer.groupLabel)) {
      xs.push_back(f.column("ugpa").numeric()[r]);
      ys.push_back(f.column("lsat").numeric()[r]);
    }
    // grid spans this level's range
    EXPECT_DOUBLE_EQ(layer.coordinates.front()[0], *std::min_element(xs.begin(), xs.end()));
    EXPECT_NEAR(layer.coordinates.back()[0], *std::max_element(xs.begin(), xs.end()), 1e-12);
    for (std::size_t gi = 0; gi < 100; gi += 11) {
      const double g = layer.coordinates[gi][0];
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t i = 0; i < xs.size(); ++i) d.push_back({std::fabs(xs[i] - g), i});
      std::stable_sort(d.begin(), d.end(), [](auto a, auto b) { return a.first < b.first; });
      double s = 0.0;
      for (std::size_t j = 0; j < 30; ++j) s += ys[d[j].second];
      EXPECT_NEAR(layer.coordinates[gi][1], s / 30.0, 1e-9) << layer.groupLabel << " at " << g;
    }
  }
}

TEST(Disparity, SmallLevelsAreSkippedWithWarning) {
  Gen g(3);
  std::vector<double> x, y;
  std::vector<std::string> s;
  for (int i = 0; i < 70; ++i) {
    x.push_back(g.uniform());
    y.push_back(g.normal());
    s.push_back(i < 60 ? "big" : "small");
  }
  Table t = table({num("x", x), num("y", y), fac("s", s)});
  auto fig = conditDisparity(t, "y", "s", "x");
  ASSERT_EQ(fig.warnings.size(), 1u);
  EXPECT_NE(fig.warnings[0].find("small"), std::string::npos);
  ASSERT_EQ(fig.doc.layers.size(), 1u);
  EXPECT_EQ(fig.doc.layers[0].groupLabel, "big");
  EXPECT_THROW(conditDisparity(t, "y", "s", "x", {"x <= 0.5"}), DataError);
  EXPECT_THROW(conditDisparity(lsaLike(3, 300), "lsat", "race1", "gender"), DataError);
}

TEST(Density, DirectSumAndNormalization) {
  Table t = lsaLike(4, 500);
  auto fig = densityByGroup(t, "lsat", "race1");
  EXPECT_EQ(fig.data.bandwidth, 1.0);
  ASSERT_EQ(fig.data.curves.size(), 5u);
  for (const auto& c : fig.data.curves) {
    EXPECT_GE(c.x.size(), 200u);
    std::vector<double> xs;
    for (auto r : detail::rowsWithLevel(t, "race1", c.group)) xs.push_back(t.column("lsat").numeric()[r]);
    for (std::size_t gi = 0; gi < c.x.size(); gi += c.x.size() / 5)
      EXPECT_NEAR(c.density[gi], kdeOracle(xs, 1.0, c.x[gi]), 1e-12);
    const double area = trapezoid(c.x, c.density);
    EXPECT_GE(area, 0.98);
    EXPECT_LE(area, 1.02);
    for (double d : c.density) EXPECT_GE(d, 0.0);
  }
  // pooled grid: min - 3h .. max + 3h
  const auto& lsat = t.column("lsat").numeric();
  EXPECT_DOUBLE_EQ(fig.data.curves[0].x.front(), *std::min_element(lsat.begin(), lsat.end()) - 3.0);
  EXPECT_DOUBLE_EQ(fig.data.curves[0].x.back(), *std::max_element(lsat.begin(), lsat.end()) + 3.0);
}

TEST(Density, ScalingIdentity) {
  Gen g(5);
  auto xs = g.normals(300, 10.0, 4.0);
  std::sort(xs.begin(), xs.end());
  const double c = 3.5, h = 1.2;
  std::vector<double> scaled(xs);
  for (auto& v : scaled) v *= c;
  for (double x = 0.0; x < 20.0; x += 0.7)
    EXPECT_NEAR(kdeAt(scaled, h, c * x), kdeAt(xs, h / c, x) / c, 1e-10);
}

TEST(Density, Errors) {
  Table t = table({num("v", {1, 2, 3}), fac("g", {"a", "a", "b"})});
  EXPECT_THROW(densityByGroup(t, "v", "g"), DataError);
  EXPECT_THROW(densityByGroup(lsaLike(6, 50), "lsat", "race1", 0.0), DataError);
}

TEST(ParCoord, DuplicatedRowIsSelected) {
  Gen g(6);
  std::vector<double> a, b;
  for (int i = 0; i < 50; ++i) {
    a.push_back(1.5);
    b.push_back(-2.0);
  }
  for (int i = 0; i < 10; ++i) {
    a.push_back(g.normal());
    b.push_back(g.normal());
  }
  Table t = table({num("a", a), num("b", b), fac("s", std::vector<std::string>(60, "z"))});
  auto r = freqParCoord(t, 1, "s", 5);
  ASSERT_EQ(r.selected.size(), 1u);
  const auto row = r.selected[0].second.at(0);
  EXPECT_EQ(a[row], 1.5);
  EXPECT_EQ(b[row], -2.0);
  EXPECT_EQ(r.doc.layers.size(), 1u);
}

TEST(ParCoord, RankingMatchesKthNeighborScan) {
  Gen g(7);
  std::vector<double> a(100), b(100), c(100);
  for (std::size_t i = 0; i < 100; ++i) {
    a[i] = g.normal();
    b[i] = 2 * a[i] + g.normal();
    c[i] = g.uniform(0, 10);
  }
  Table t = table({num("a", a), num("b", b), num("c", c), fac("s", std::vector<std::string>(100, "z"))});
  const std::size_t k = 4;
  auto r = freqParCoord(t, 100, "s", k);
  // oracle: standardize, all-pairs distances, k-th smallest; denser = smaller d_k
  auto z = [](std::vector<double> v) {
    const double m = stats::mean(v), s = stats::sd(v);
    for (auto& x : v) x = (x - m) / s;
    return v;
  };
  auto za = z(a), zb = z(b), zc = z(c);
  std::vector<double> dk(100);
  for (std::size_t i = 0; i < 100; ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < 100; ++j)
      if (j != i) d.push_back(std::hypot(za[i] - za[j], zb[i] - zb[j], zc[i] - zc[j]));
    std::sort(d.begin(), d.end());
    dk[i] = d[k - 1];
  }
  std::vector<std::size_t> order(100);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return dk[x] < dk[y]; });
  EXPECT_EQ(r.selected[0].second, order);
}

TEST(ParCoord, GroupsAndClamp) {
  Table t = lsaLike(8, 1500);
  auto r = freqParCoord(t, 75, "race1", 5, {"fam_inc", "ugpa", "gender", "lsat"});
  EXPECT_EQ(r.selected.size(), 5u);
  EXPECT_EQ(r.doc.legend.size(), 5u);
  for (const auto& [level, rows] : r.selected) EXPECT_LE(rows.size(), 75u);
  EXPECT_EQ(r.doc.layers.size(), 375u);
  for (const auto& layer : r.doc.layers) EXPECT_EQ(layer.coordinates.size(), 4u);

  Table small = lsaLike(9, 100);
  auto clamped = freqParCoord(small, 500, "race1", 3, {"ugpa", "lsat"});
  EXPECT_FALSE(clamped.warnings.empty());
  EXPECT_THROW(freqParCoord(small, 5, "race1", 200, {"ugpa", "lsat"}), DataError);
  EXPECT_THROW(freqParCoord(small, 5, "race1", 3, {"ugpa"}), DataError);
}

TEST(Scatter3D, CountsAndSingleRow) {
  Table t = lsaLike(10, 400);
  auto r = scatter3D(t, {"lsat", "ugpa", "fam_inc"}, "race1");
  ASSERT_EQ(r.doc.layers.size(), 5u);
  for (const auto& layer : r.doc.layers) {
    EXPECT_EQ(layer.coordinates.size(), detail::rowsWithLevel(t, "race1", layer.groupLabel).size());
    EXPECT_EQ(layer.size, 4.0);
  }
  EXPECT_EQ(r.tuples.size(), 400u);

  Table one = table({num("x", {3.0}), num("y", {-1.0}), num("z", {8.0}), fac("s", {"only"})});
  auto s = scatter3D(one, {"x", "y", "z"}, "s");
  ASSERT_EQ(s.tuples.size(), 1u);
  EXPECT_EQ(s.tuples[0].x, 3.0);
  EXPECT_EQ(s.tuples[0].y, -1.0);
  EXPECT_EQ(s.tuples[0].z, 8.0);
  auto centre = projectIsometric(0.5, 0.5, 0.5);
  EXPECT_EQ(s.doc.layers[0].coordinates[0], centre);
  EXPECT_THROW(scatter3D(t, {"lsat", "gender", "ugpa"}, "race1"), DataError);

  std::ostringstream csv;
  writeScatterCsv(s, "s", csv);
  EXPECT_EQ(csv.str(), "x,y,z,s\n3,-1,8,only\n");
}

TEST(Scatter3D, ProjectionGeometry) {
  // azimuth 45: the x and y unit vectors map to mirror-image screen offsets
  auto ex = projectIsometric(1, 0, 0), ey = projectIsometric(0, 1, 0), ez = projectIsometric(0, 0, 1);
  EXPECT_NEAR(ex[0], -ey[0], 1e-15);
  EXPECT_NEAR(ex[1], ey[1], 1e-15);
  EXPECT_NEAR(ez[0], 0.0, 1e-15);
  EXPECT_NEAR(ez[1], std::cos(std::numbers::pi / 6), 1e-15);
  EXPECT_NEAR(ex[1], std::sin(std::numbers::pi / 4) * std::sin(std::numbers::pi / 6), 1e-15);
}

namespace {

PlotDocument fixtureDoc() {
  PlotDocument doc;
  doc.title = "Fixture <plot> & \"quotes\"";
  doc.layers.push_back({LayerKind::Curve, "alpha", {{0, 0}, {1, 2}, {2, 1.5}, {3, 3}}, "s0", 2.0});
  doc.layers.push_back({LayerKind::Points, "beta", {{0.5, 1}, {1.5, 2.5}, {2.5, 0.5}}, "s1", 4.0});
  doc.layers.push_back({LayerKind::Polyline, "gamma", {{0, 3}, {1, 1}, {3, 0.25}}, "s2", 1.0});
  doc.axes = {makeAxis("x value", 0, 3), makeAxis("y value", 0, 3)};
  doc.legend = detail::legendFor(doc.layers);
  return doc;
}

}  // namespace

TEST(Svg, GoldenFile) {
  const std::string svg = renderSvg(fixtureDoc(), 640, 400);
  const std::filesystem::path golden = std::filesystem::path(FAIRSCOPE_GOLDEN_DIR) / "fixture.svg";
  if (std::getenv("FAIRSCOPE_UPDATE_GOLDEN")) {
    std::filesystem::create_directories(golden.parent_path());
    std::ofstream(golden, std::ios::binary) << svg;
  }
  std::ifstream in(golden, std::ios::binary);
  ASSERT_TRUE(in) << "missing golden file " << golden;
  std::stringstream expected;
  expected << in.rdbuf();
  EXPECT_EQ(svg, expected.str());
}

TEST(Svg, WellFormedAndComplete) {
  const std::string svg = renderSvg(fixtureDoc());
  std::istringstream in(svg);
  boost::property_tree::ptree tree;
  ASSERT_NO_THROW(boost::property_tree::read_xml(in, tree));
  const auto& root = tree.get_child("svg");
  EXPECT_EQ(root.get<std::string>("<xmlattr>.width"), "720");
  EXPECT_EQ(root.get<std::string>("<xmlattr>.version"), "1.1");
  EXPECT_NE(svg.find("&lt;plot&gt; &amp;"), std::string::npos);
  for (const char* label : {"alpha", "beta", "gamma", "x value", "y value"})
    EXPECT_NE(svg.find(label), std::string::npos) << label;
  EXPECT_EQ(svg, renderSvg(fixtureDoc()));
}

TEST(Svg, Errors) {
  PlotDocument empty;
  EXPECT_THROW(renderSvg(empty), DataError);
  EXPECT_THROW(renderSvg(fixtureDoc(), 0, 100), DataError);
  EXPECT_THROW(renderSvg(fixtureDoc(), 100, -1), DataError);
}

TEST(PlotDocument, Validation) {
  auto doc = fixtureDoc();
  EXPECT_NO_THROW(doc.validate());
  auto outside = doc;
  outside.layers[0].coordinates.push_back({4.0, 1.0});
  EXPECT_THROW(outside.validate(), DataError);
  auto nan = doc;
  nan.layers[1].coordinates[0][1] = std::nan("");
  EXPECT_THROW(nan.validate(), DataError);
  auto noLegend = doc;
  noLegend.legend.pop_back();
  EXPECT_THROW(noLegend.validate(), DataError);
}

TEST(PlotDocument, EveryFigureIsFinite) {
  Table t = lsaLike(11, 700);
  std::vector<PlotDocument> docs{conditDisparity(t, "lsat", "race1", "ugpa").doc, densityByGroup(t, "ugpa", "gender").doc,
                                 freqParCoord(t, 10, "race1").doc, scatter3D(t, {"lsat", "ugpa", "fam_inc"}, "gender").doc};
  for (const auto& d : docs) {
    for (const auto& layer : d.layers)
      for (const auto& c : layer.coordinates) EXPECT_TRUE(std::isfinite(c[0]) && std::isfinite(c[1]));
    EXPECT_NO_THROW(renderSvg(d));
  }
}
