#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "fairscope/density.hpp"
#include "fairscope/design.hpp"
#include "fairscope/error.hpp"
#include "fairscope/forest.hpp"
#include "fairscope/kendall.hpp"
#include "fairscope/parallel.hpp"
#include "fairscope/plot.hpp"
#include "fairscope/table.hpp"

namespace fairscope {

// ---------------------------------------------------------------------------
// Confounder hunting

struct ConfounderReport {
  ImportanceVector impForY;  // features predicting Y, S excluded
  ImportanceVector impForS;  // features predicting S, Y excluded
  // intersections[i-1] = top-i(Y) intersected with top-i(S), in Y-rank order
  std::vector<std::vector<std::string>> intersections;
  std::size_t holdoutSize = 0;
  std::uint64_t seed = 0;
};

inline std::vector<std::vector<std::string>> topIntersections(const std::vector<std::string>& rankedY,
                                                              const std::vector<std::string>& rankedS,
                                                              std::size_t depth) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 1; i <= depth; ++i) {
    std::set<std::string> topS(rankedS.begin(), rankedS.begin() + static_cast<std::ptrdiff_t>(std::min(i, rankedS.size())));
    std::vector<std::string> both;
    for (std::size_t j = 0; j < std::min(i, rankedY.size()); ++j)
      if (topS.count(rankedY[j])) both.push_back(rankedY[j]);
    out.push_back(std::move(both));
  }
  return out;
}

// Two forests on a training split: Y from X and S from X. Permutation
// importances are measured on the holdout rows.
inline ConfounderReport huntConfounders(const Table& t, const ModelSpec& spec, std::size_t intersectDepth,
                                        ForestParams params = {}, std::uint64_t seed = 1,
                                        std::size_t importanceRepeats = 5) {
  spec.validate(t);
  const std::string& s = spec.s();
  if (!t.column(s).isFactor()) throw DataError("sensitive variable '" + s + "' must be a factor");
  if (spec.xNames.empty()) throw DataError("no features to rank");
  if (intersectDepth < 1 || intersectDepth > spec.xNames.size())
    throw DataError("intersect depth must be between 1 and the feature count (" +
                    std::to_string(spec.xNames.size()) + ")");
  auto split = makeHoldout(t.nrows(), deriveSeed(seed, 0));
  Table train = t.rows(split.trainIndices);
  Table holdout = t.rows(split.holdoutIndices);

  ModelSpec forY{spec.yName, std::nullopt, spec.xNames};
  ModelSpec forS{s, std::nullopt, spec.xNames};
  params.seed = deriveSeed(seed, 1);
  ForestModel fy = fitForest(train, forY, params);
  params.seed = deriveSeed(seed, 2);
  ForestModel fs = fitForest(train, forS, params);

  ConfounderReport r;
  r.seed = seed;
  r.holdoutSize = holdout.nrows();
  r.impForY = permutationImportance(fy, holdout, importanceRepeats, deriveSeed(seed, 3));
  r.impForS = permutationImportance(fs, holdout, importanceRepeats, deriveSeed(seed, 4));
  r.intersections = topIntersections(r.impForY.ranked(), r.impForS.ranked(), intersectDepth);
  return r;
}

// ---------------------------------------------------------------------------
// Proxy hunting

struct TauMatrix {
  std::vector<std::string> rowNames;  // "S.level"
  std::vector<std::string> columnNames;
  std::vector<std::vector<TauResult>> entries;  // [row][column]

  const TauResult& at(const std::string& row, const std::string& col) const {
    auto r = std::find(rowNames.begin(), rowNames.end(), row);
    auto c = std::find(columnNames.begin(), columnNames.end(), col);
    if (r == rowNames.end() || c == columnNames.end())
      throw DataError("no tau entry for (" + row + ", " + col + ")");
    return entries[static_cast<std::size_t>(r - rowNames.begin())][static_cast<std::size_t>(c - columnNames.begin())];
  }
};

namespace detail {

struct ExpandedFeature {
  std::string name;
  std::vector<double> values;
};

// Numeric columns as-is; a factor becomes one 0/1 indicator per level.
inline std::vector<ExpandedFeature> expandFeatures(const Table& t, const std::vector<std::string>& names) {
  std::vector<ExpandedFeature> out;
  for (const auto& n : names) {
    const Column& c = t.column(n);
    if (c.isNumeric()) {
      out.push_back({n, c.numeric()});
      continue;
    }
    const auto& f = c.factor();
    for (const auto& level : observedLevels(t, n)) {
      ExpandedFeature e{n + "." + level, std::vector<double>(t.nrows())};
      for (std::size_t i = 0; i < t.nrows(); ++i) e.values[i] = f.label(i) == level ? 1.0 : 0.0;
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace detail

// Kendall tau-b between each S-level indicator (level vs rest) and each
// other feature. Y is not a feature here.
inline TauMatrix huntProxies(const Table& t, const ModelSpec& spec) {
  spec.validate(t);
  const std::string& s = spec.s();
  if (!t.column(s).isFactor()) throw DataError("sensitive variable '" + s + "' must be a factor");
  auto rows = detail::expandFeatures(t, {s});
  auto cols = detail::expandFeatures(t, spec.xNames);
  if (cols.empty()) throw DataError("no features to correlate with " + s);
  TauMatrix m;
  for (const auto& r : rows) m.rowNames.push_back(r.name);
  for (const auto& c : cols) m.columnNames.push_back(c.name);
  m.entries.assign(rows.size(), std::vector<TauResult>(cols.size()));
  parallelFor(rows.size() * cols.size(), [&](std::size_t k) {
    const std::size_t i = k / cols.size();
    const std::size_t j = k % cols.size();
    m.entries[i][j] = kendallTauB(rows[i].values, cols[j].values);
  });
  return m;
}

inline void writeTauCsv(const TauMatrix& m, std::ostream& out) {
  out << "\"\"";
  for (const auto& c : m.columnNames) out << ',' << detail::quoteCsv(c);
  out << '\n';
  for (std::size_t i = 0; i < m.rowNames.size(); ++i) {
    out << detail::quoteCsv(m.rowNames[i]);
    for (const auto& e : m.entries[i]) out << ',' << (e.defined ? formatDouble(e.value) : "NA");
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Per-variable summaries by S level

struct FrequencyGroup {
  std::string group;
  std::size_t n = 0;
  std::vector<std::size_t> counts;  // aligned with FrequencyByGroup::levels
  std::vector<double> proportions;  // within the group
};

struct FrequencyByGroup {
  std::string variable;
  std::string groupVariable;
  std::vector<std::string> levels;
  std::vector<FrequencyGroup> groups;
};

using ConfounderSummary = std::variant<DensityByGroup, FrequencyByGroup>;

inline FrequencyByGroup frequencyByGroup(const Table& t, const std::string& feature, const std::string& sName) {
  FrequencyByGroup out;
  out.variable = feature;
  out.groupVariable = sName;
  out.levels = detail::observedLevels(t, feature);
  const auto& f = t.column(feature).factor();
  for (const auto& level : detail::observedLevels(t, sName)) {
    FrequencyGroup g;
    g.group = level;
    g.counts.assign(out.levels.size(), 0);
    for (auto r : detail::rowsWithLevel(t, sName, level)) {
      auto it = std::lower_bound(out.levels.begin(), out.levels.end(), f.label(r));
      ++g.counts[static_cast<std::size_t>(it - out.levels.begin())];
      ++g.n;
    }
    for (auto c : g.counts) g.proportions.push_back(static_cast<double>(c) / static_cast<double>(g.n));
    out.groups.push_back(std::move(g));
  }
  return out;
}

inline ConfounderSummary confounderSummary(const Table& t, const ModelSpec& spec, const std::string& feature,
                                           double bandwidth = kDefaultBandwidth) {
  spec.validate(t);
  const std::string& s = spec.s();
  if (feature == spec.yName || feature == s)
    throw DataError("'" + feature + "' is the response or the sensitive variable");
  if (!t.column(s).isFactor()) throw DataError("sensitive variable '" + s + "' must be a factor");
  if (t.column(feature).isNumeric()) return densityByGroupData(t, feature, s, bandwidth);
  return frequencyByGroup(t, feature, s);
}

// Panel for one summary: density curves, or within-level proportions drawn
// as points joined by lines over the feature's levels.
inline PlotDocument frequencyDocument(const FrequencyByGroup& f) {
  PlotDocument doc;
  doc.title = "Proportions of " + f.variable + " by " + f.groupVariable;
  for (std::size_t g = 0; g < f.groups.size(); ++g) {
    Layer line{LayerKind::Curve, f.groups[g].group, {}, styleKeyFor(g), 1.5};
    for (std::size_t l = 0; l < f.levels.size(); ++l)
      line.coordinates.push_back({static_cast<double>(l), f.groups[g].proportions[l]});
    Layer pts = line;
    pts.kind = LayerKind::Points;
    pts.size = 6.0;
    doc.layers.push_back(std::move(line));
    doc.layers.push_back(std::move(pts));
  }
  Axis xa{f.variable, -0.5, static_cast<double>(f.levels.size()) - 0.5, {}, {}};
  for (std::size_t l = 0; l < f.levels.size(); ++l) {
    xa.ticks.push_back(static_cast<double>(l));
    xa.tickLabels.push_back(f.levels[l]);
  }
  doc.axes = {xa, makeAxis("proportion", 0.0, 1.0)};
  doc.legend = detail::legendFor(doc.layers);
  doc.validate();
  return doc;
}

inline PlotDocument confounderDocument(const ConfounderSummary& s) {
  if (auto d = std::get_if<DensityByGroup>(&s)) return densityDocument(*d);
  return frequencyDocument(std::get<FrequencyByGroup>(s));
}

}  // namespace fairscope
