#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fairscope/density.hpp"
#include "fairscope/design.hpp"
#include "fairscope/error.hpp"
#include "fairscope/knn.hpp"
#include "fairscope/table.hpp"

namespace fairscope {

// ---------------------------------------------------------------------------
// Renderer-independent plot description

struct Axis {
  std::string label;
  double min = 0.0;
  double max = 1.0;
  std::vector<double> ticks;
  std::vector<std::string> tickLabels;  // optional; formatted ticks when empty
};

enum class LayerKind { Curve, Points, Polyline };

inline const char* layerKindName(LayerKind k) {
  switch (k) {
    case LayerKind::Curve: return "curve";
    case LayerKind::Points: return "points";
    case LayerKind::Polyline: return "polyline";
  }
  return "curve";
}

struct Layer {
  LayerKind kind = LayerKind::Curve;
  std::string groupLabel;
  std::vector<std::array<double, 2>> coordinates;
  std::string styleKey;
  double size = 1.0;  // stroke width or point radius
};

struct LegendEntry {
  std::string group;
  std::string styleKey;
};

struct PlotDocument {
  std::string title;
  std::array<Axis, 2> axes;  // x, y
  std::vector<Layer> layers;
  std::vector<LegendEntry> legend;

  // Throws unless every coordinate is finite and inside the axis ranges and
  // every layer group is in the legend.
  void validate() const {
    for (const auto& layer : layers) {
      auto in = std::find_if(legend.begin(), legend.end(),
                             [&](const LegendEntry& e) { return e.group == layer.groupLabel; });
      if (in == legend.end())
        throw DataError("layer group '" + layer.groupLabel + "' missing from the legend");
      for (const auto& c : layer.coordinates) {
        if (!std::isfinite(c[0]) || !std::isfinite(c[1]))
          throw DataError("non-finite coordinate in plot layer '" + layer.groupLabel + "'");
        if (c[0] < axes[0].min || c[0] > axes[0].max || c[1] < axes[1].min || c[1] > axes[1].max)
          throw DataError("coordinate outside the axis range in layer '" + layer.groupLabel + "'");
      }
    }
  }
};

inline std::string styleKeyFor(std::size_t i) { return "s" + std::to_string(i); }

// Roughly five round tick values covering [lo, hi].
inline std::vector<double> niceTicks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  const double step = (norm < 1.5 ? 1.0 : norm < 3.0 ? 2.0 : norm < 7.0 ? 5.0 : 10.0) * mag;
  std::vector<double> ticks;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step)
    ticks.push_back(std::fabs(v) < 1e-12 * step ? 0.0 : v);
  return ticks;
}

inline Axis makeAxis(std::string label, double lo, double hi) {
  if (!(hi > lo)) {
    const double pad = lo == 0.0 ? 1.0 : std::fabs(lo) * 0.05;
    lo -= pad;
    hi += pad;
  }
  Axis a{std::move(label), lo, hi, niceTicks(lo, hi), {}};
  return a;
}

namespace detail {

inline std::array<double, 2> coordinateRange(const std::vector<Layer>& layers, int dim) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& l : layers)
    for (const auto& c : l.coordinates) {
      lo = std::min(lo, c[dim]);
      hi = std::max(hi, c[dim]);
    }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  return {lo, hi};
}

inline std::vector<LegendEntry> legendFor(const std::vector<Layer>& layers) {
  std::vector<LegendEntry> legend;
  for (const auto& l : layers)
    if (std::none_of(legend.begin(), legend.end(),
                     [&](const LegendEntry& e) { return e.group == l.groupLabel; }))
      legend.push_back({l.groupLabel, l.styleKey});
  return legend;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Row filters: "column op value" with op in <, <=, >, >=, ==

struct Condition {
  std::string column;
  std::string op;
  std::string value;

  static Condition parse(const std::string& text) {
    static const char* ops[] = {"<=", ">=", "==", "<", ">"};
    for (const char* op : ops) {
      auto pos = text.find(op);
      if (pos == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      Condition c{trim(text.substr(0, pos)), op, trim(text.substr(pos + std::string(op).size()))};
      if (c.column.empty() || c.value.empty()) break;
      return c;
    }
    throw DataError("cannot parse condition '" + text + "' (expected 'column op value')");
  }

  bool holds(const Table& t, std::size_t row) const {
    const Column& c = t.column(column);
    if (c.isFactor()) {
      if (op != "==") throw DataError("factor column '" + column + "' only supports ==");
      return c.factor().label(row) == value;
    }
    auto v = detail::parseNumber(value);
    if (!v) throw DataError("condition value '" + value + "' is not numeric");
    const double x = c.numeric()[row];
    if (op == "<") return x < *v;
    if (op == "<=") return x <= *v;
    if (op == ">") return x > *v;
    if (op == ">=") return x >= *v;
    return x == *v;
  }
};

inline Table applyConditions(const Table& t, const std::vector<Condition>& conds) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < t.nrows(); ++i)
    if (std::all_of(conds.begin(), conds.end(), [&](const Condition& c) { return c.holds(t, i); }))
      keep.push_back(i);
  return t.rows(keep);
}

// ---------------------------------------------------------------------------
// Conditional disparity curves

struct FigureResult {
  PlotDocument doc;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kDisparityK = 50;
inline constexpr std::size_t kDisparityGrid = 100;

// Per S level, a kNN smooth of Y on one covariate over that level's range.
inline FigureResult conditDisparity(const Table& table, const std::string& yName,
                                    const std::string& sName, const std::string& xName,
                                    const std::vector<std::string>& condits = {},
                                    std::size_t k = kDisparityK) {
  std::vector<Condition> conds;
  for (const auto& c : condits) conds.push_back(Condition::parse(c));
  Table t = applyConditions(table, conds);
  if (!t.column(xName).isNumeric()) throw DataError("'" + xName + "' must be numeric");
  FigureResult out;
  auto levels = detail::observedLevels(t, sName);
  for (std::size_t li = 0; li < levels.size(); ++li) {
    auto rows = detail::rowsWithLevel(t, sName, levels[li]);
    if (rows.size() < k) {
      out.warnings.push_back("level '" + levels[li] + "' has " + std::to_string(rows.size()) +
                             " rows after filtering, fewer than k = " + std::to_string(k) +
                             "; skipped");
      continue;
    }
    Table sub = t.rows(rows).select(std::vector<std::string>{xName, yName});
    ModelSpec spec{yName, std::nullopt, {xName}};
    KnnModel knn = fitKnn(sub, spec, k);
    const auto& xs = sub.column(xName).numeric();
    auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    NumericData grid(kDisparityGrid);
    for (std::size_t g = 0; g < kDisparityGrid; ++g)
      grid[g] = *mn + (*mx - *mn) * static_cast<double>(g) / static_cast<double>(kDisparityGrid - 1);
    Table gridTable("grid", {Column(xName, grid)});
    Eigen::VectorXd fitted = predictKnn(knn, gridTable);
    Layer layer{LayerKind::Curve, levels[li], {}, styleKeyFor(li), 2.0};
    for (std::size_t g = 0; g < kDisparityGrid; ++g)
      layer.coordinates.push_back({grid[g], fitted[static_cast<Eigen::Index>(g)]});
    out.doc.layers.push_back(std::move(layer));
  }
  if (out.doc.layers.empty()) throw DataError("no level of " + sName + " has at least k rows");
  out.doc.title = "Conditional disparity: " + yName + " vs " + xName + " by " + sName;
  auto xr = detail::coordinateRange(out.doc.layers, 0);
  auto yr = detail::coordinateRange(out.doc.layers, 1);
  out.doc.axes = {makeAxis(xName, xr[0], xr[1]), makeAxis(yName, yr[0], yr[1])};
  out.doc.legend = detail::legendFor(out.doc.layers);
  out.doc.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Density by group

struct DensityFigure {
  DensityByGroup data;
  PlotDocument doc;
};

inline PlotDocument densityDocument(const DensityByGroup& d) {
  PlotDocument doc;
  doc.title = "Density of " + d.variable + " by " + d.groupVariable + " (bandwidth " +
              formatDouble(d.bandwidth) + ")";
  for (std::size_t i = 0; i < d.curves.size(); ++i) {
    Layer layer{LayerKind::Curve, d.curves[i].group, {}, styleKeyFor(i), 2.0};
    for (std::size_t g = 0; g < d.curves[i].x.size(); ++g)
      layer.coordinates.push_back({d.curves[i].x[g], d.curves[i].density[g]});
    doc.layers.push_back(std::move(layer));
  }
  auto xr = detail::coordinateRange(doc.layers, 0);
  auto yr = detail::coordinateRange(doc.layers, 1);
  doc.axes = {makeAxis(d.variable, xr[0], xr[1]), makeAxis("density", 0.0, std::max(yr[1], 1e-12))};
  doc.legend = detail::legendFor(doc.layers);
  doc.validate();
  return doc;
}

inline DensityFigure densityByGroup(const Table& t, const std::string& cName,
                                    const std::string& sName, double bandwidth = kDefaultBandwidth) {
  DensityFigure f;
  f.data = densityByGroupData(t, cName, sName, bandwidth);
  f.doc = densityDocument(f.data);
  return f;
}

// ---------------------------------------------------------------------------
// Frequent-pattern parallel coordinates

struct ParCoordResult {
  PlotDocument doc;
  std::vector<std::string> warnings;
  std::vector<std::string> columns;
  // selected original row indices per level, most frequent pattern first
  std::vector<std::pair<std::string, std::vector<std::size_t>>> selected;
};

// Rows are ranked by a k-NN density score 1 / d_k^p, where d_k is the
// distance to the k-th nearest other row of the same level after centering
// and scaling within the level, and p is the number of columns.
// Factor columns enter as level codes 0..m-1.
inline std::vector<double> knnDensityScores(const Eigen::MatrixXd& z, std::size_t k) {
  const auto n = z.rows();
  const double p = static_cast<double>(z.cols());
  std::vector<double> scores(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dist[c++] = (z.row(i) - z.row(j)).norm();
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k) - 1, dist.end());
    const double dk = dist[k - 1];
    scores[static_cast<std::size_t>(i)] =
        dk > 0.0 ? 1.0 / std::pow(dk, p) : std::numeric_limits<double>::infinity();
  }
  return scores;
}

inline ParCoordResult freqParCoord(const Table& t, std::size_t m, const std::string& sName,
                                   std::size_t k = 5,
                                   std::vector<std::string> columns = {}) {
  if (m < 1) throw DataError("m must be at least 1");
  if (k < 1) throw DataError("k must be at least 1");
  if (columns.empty())
    for (const auto& c : t.columns())
      if (c.name() != sName) columns.push_back(c.name());
  if (columns.size() < 2) throw DataError("parallel coordinates need at least two columns");
  ParCoordResult out;
  out.columns = columns;

  auto levels = detail::observedLevels(t, sName);
  const auto p = static_cast<Eigen::Index>(columns.size());
  for (std::size_t li = 0; li < levels.size(); ++li) {
    auto rows = detail::rowsWithLevel(t, sName, levels[li]);
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (static_cast<std::size_t>(n) <= k)
      throw DataError("level '" + levels[li] + "' has " + std::to_string(n) +
                      " rows; k must be smaller than every level's row count");
    Eigen::MatrixXd z(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      const Column& c = t.column(columns[static_cast<std::size_t>(j)]);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = rows[static_cast<std::size_t>(i)];
        z(i, j) = c.isNumeric() ? c.numeric()[r] : static_cast<double>(c.factor().codes[r]);
      }
      const double mean = z.col(j).mean();
      const double sd = std::sqrt((z.col(j).array() - mean).square().sum() / static_cast<double>(n - 1));
      z.col(j) = (z.col(j).array() - mean) / (sd > 0.0 ? sd : 1.0);
    }
    auto scores = knnDensityScores(z, k);
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t take = m;
    if (take > order.size()) {
      out.warnings.push_back("m = " + std::to_string(m) + " exceeds the " +
                             std::to_string(order.size()) + " rows of level '" + levels[li] +
                             "'; clamped");
      take = order.size();
    }
    std::vector<std::size_t> chosen;
    for (std::size_t q = 0; q < take; ++q) {
      const auto i = static_cast<Eigen::Index>(order[q]);
      chosen.push_back(rows[order[q]]);
      Layer layer{LayerKind::Polyline, levels[li], {}, styleKeyFor(li), 1.0};
      for (Eigen::Index j = 0; j < p; ++j) layer.coordinates.push_back({static_cast<double>(j), z(i, j)});
      out.doc.layers.push_back(std::move(layer));
    }
    out.selected.emplace_back(levels[li], std::move(chosen));
  }
  out.doc.title = "Most frequent patterns by " + sName;
  auto yr = detail::coordinateRange(out.doc.layers, 1);
  Axis xa{"variable", -0.25, static_cast<double>(p - 1) + 0.25, {}, {}};
  for (Eigen::Index j = 0; j < p; ++j) {
    xa.ticks.push_back(static_cast<double>(j));
    xa.tickLabels.push_back(columns[static_cast<std::size_t>(j)]);
  }
  out.doc.axes = {xa, makeAxis("standardized value", yr[0], yr[1])};
  out.doc.legend = detail::legendFor(out.doc.layers);
  out.doc.validate();
  return out;
}

// ---------------------------------------------------------------------------
// 3D scatter, statically projected

struct ScatterTuple {
  double x = 0.0, y = 0.0, z = 0.0;
  std::string level;
};

struct Scatter3DResult {
  PlotDocument doc;
  std::array<std::string, 3> names;
  std::vector<ScatterTuple> tuples;
};

inline constexpr double kAzimuthDeg = 45.0;
inline constexpr double kElevationDeg = 30.0;
inline constexpr double kDefaultPointSize = 4.0;

// Isometric view of unit-cube coordinates: rotate about z by the azimuth,
// then tilt by the elevation; returns screen (u, v).
inline std::array<double, 2> projectIsometric(double x, double y, double z) {
  const double az = kAzimuthDeg * std::numbers::pi / 180.0;
  const double el = kElevationDeg * std::numbers::pi / 180.0;
  const double u = x * std::cos(az) - y * std::sin(az);
  const double depth = x * std::sin(az) + y * std::cos(az);
  const double v = z * std::cos(el) + depth * std::sin(el);
  return {u, v};
}

inline Scatter3DResult scatter3D(const Table& t, const std::array<std::string, 3>& names,
                                 const std::string& sName, double pointSize = kDefaultPointSize) {
  std::array<const NumericData*, 3> cols{};
  std::array<std::array<double, 2>, 3> range{};
  for (int d = 0; d < 3; ++d) {
    const Column& c = t.column(names[d]);
    if (!c.isNumeric()) throw DataError("'" + names[d] + "' must be numeric");
    cols[d] = &c.numeric();
    auto [mn, mx] = std::minmax_element(cols[d]->begin(), cols[d]->end());
    range[d] = {*mn, *mx};
  }
  auto unit = [&](int d, double v) {
    const double span = range[d][1] - range[d][0];
    return span > 0.0 ? (v - range[d][0]) / span : 0.5;
  };
  Scatter3DResult out;
  out.names = names;
  const auto& s = t.column(sName).factor();
  auto levels = detail::observedLevels(t, sName);
  for (std::size_t li = 0; li < levels.size(); ++li) {
    Layer layer{LayerKind::Points, levels[li], {}, styleKeyFor(li), pointSize};
    for (std::size_t i = 0; i < t.nrows(); ++i) {
      if (s.label(i) != levels[li]) continue;
      const double x = (*cols[0])[i], y = (*cols[1])[i], z = (*cols[2])[i];
      out.tuples.push_back({x, y, z, levels[li]});
      layer.coordinates.push_back(projectIsometric(unit(0, x), unit(1, y), unit(2, z)));
    }
    out.doc.layers.push_back(std::move(layer));
  }
  out.doc.title = names[0] + ", " + names[1] + ", " + names[2] + " by " + sName +
                  " (azimuth 45, elevation 30)";
  // bounds of the projected unit cube
  double ulo = 1e300, uhi = -1e300, vlo = 1e300, vhi = -1e300;
  for (int cx = 0; cx < 2; ++cx)
    for (int cy = 0; cy < 2; ++cy)
      for (int cz = 0; cz < 2; ++cz) {
        auto p = projectIsometric(cx, cy, cz);
        ulo = std::min(ulo, p[0]);
        uhi = std::max(uhi, p[0]);
        vlo = std::min(vlo, p[1]);
        vhi = std::max(vhi, p[1]);
      }
  out.doc.axes = {Axis{"projected x", ulo, uhi, {}, {}}, Axis{"projected y", vlo, vhi, {}, {}}};
  out.doc.legend = detail::legendFor(out.doc.layers);
  out.doc.validate();
  return out;
}

inline void writeScatterCsv(const Scatter3DResult& r, const std::string& sName, std::ostream& out) {
  out << detail::quoteCsv(r.names[0]) << ',' << detail::quoteCsv(r.names[1]) << ','
      << detail::quoteCsv(r.names[2]) << ',' << detail::quoteCsv(sName) << '\n';
  for (const auto& t : r.tuples)
    out << formatDouble(t.x) << ',' << formatDouble(t.y) << ',' << formatDouble(t.z) << ','
        << detail::quoteCsv(t.level) << '\n';
}

}  // namespace fairscope
