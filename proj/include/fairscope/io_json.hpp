#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fairscope/fair.hpp"
#include "fairscope/forest.hpp"
#include "fairscope/hunting.hpp"
#include "fairscope/iamb.hpp"
#include "fairscope/knn.hpp"
#include "fairscope/linear.hpp"
#include "fairscope/logistic.hpp"
#include "fairscope/matching.hpp"
#include "fairscope/plot.hpp"

namespace fairscope {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;

namespace detail {

// Non-finite numbers become null.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json numArray(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

inline Json numArray(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline Json matrixJson(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(numArray(Eigen::VectorXd(m.row(i).transpose())));
  return rows;
}

inline Json tauJson(const TauResult& t) {
  if (t.defined) return t.value;
  return Json{{"value", nullptr}, {"undefined", t.reason}};
}

inline Json encoderJson(const DesignEncoder& e) {
  Json terms = Json::array();
  for (const auto& t : e.terms()) {
    Json j{{"name", t.name}, {"type", t.numeric ? "numeric" : "factor"}};
    if (!t.numeric) j["levels"] = t.levels;
    terms.push_back(std::move(j));
  }
  return Json{{"intercept", e.intercept()}, {"terms", terms}};
}

}  // namespace detail

inline Json toJson(const FitSummary& f) {
  Json coefs = Json::array();
  for (std::size_t i = 0; i < f.coefficientNames.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    coefs.push_back(Json{{"term", f.coefficientNames[i]},
                         {"estimate", detail::num(f.estimates[k])},
                         {"std_error", detail::num(f.standardErrors[k])},
                         {"p_value", detail::num(f.pValues[k])}});
  }
  return Json{{"coefficients", coefs},
              {"covariance", detail::matrixJson(f.covariance)},
              {"residual_variance", detail::num(f.residualVariance)},
              {"df_residual", f.dfResidual},
              {"nobs", f.nobs},
              {"sandwich", f.sandwichUsed}};
}

inline Json toJson(const LogitFit& f) {
  Json j = toJson(static_cast<const FitSummary&>(f));
  j.erase("residual_variance");
  j.erase("df_residual");
  j["deviance"] = detail::num(f.deviance);
  j["iterations"] = f.iterations;
  j["final_deviance_change"] = detail::num(f.finalDevianceChange);
  return j;
}

inline Json toJson(const SComparisonReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    Json j{{"comparison", row.label()},
           {"level_a", row.levelA},
           {"level_b", row.levelB}};
    if (row.pointIndex) {
      j["point"] = *row.pointIndex + 1;
      Json pt = Json::object();
      for (const auto& [k, v] : row.point) pt[k] = v;
      j["covariates"] = pt;
    }
    j["estimate"] = detail::num(row.estimate);
    j["std_error"] = detail::num(row.standardError);
    j["p_value"] = detail::num(row.pValue);
    rows.push_back(std::move(j));
  }
  return Json{{"scale", r.scale}, {"sComparisons", rows}};
}

template <typename Fit>
Json toJson(const SModel<Fit>& m) {
  Json j{{"y", m.spec.yName}, {"s", m.spec.s()}, {"interactions", m.interactions}, {"levels", m.levels}};
  if (m.pooled) {
    j.update(toJson(*m.pooled));
  } else {
    Json per = Json::object();
    for (const auto& lf : m.perLevel) per[lf.level] = toJson(lf.fit);
    j["fits_by_level"] = per;
  }
  return j;
}

inline Json toJson(const ImportanceVector& v) {
  Json rows = Json::array();
  for (const auto& name : v.ranked()) {
    std::size_t i = static_cast<std::size_t>(
        std::find(v.features.begin(), v.features.end(), name) - v.features.begin());
    rows.push_back(Json{{"feature", name}, {"importance", detail::num(v.scores[i])},
                        {"std_error", detail::num(v.standardErrors[i])}});
  }
  return Json{{"loss", v.loss}, {"baseline_loss", detail::num(v.baselineLoss)}, {"importance", rows}};
}

inline Json toJson(const ConfounderReport& r) {
  Json inter = Json::array();
  for (std::size_t i = 0; i < r.intersections.size(); ++i)
    inter.push_back(Json{{"depth", i + 1}, {"features", r.intersections[i]}});
  return Json{{"imp_for_y", toJson(r.impForY)},
              {"imp_for_s", toJson(r.impForS)},
              {"intersections", inter},
              {"holdout_size", r.holdoutSize},
              {"seed", r.seed}};
}

inline Json toJson(const TauMatrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rowNames.size(); ++i) {
    Json vals = Json::object();
    for (std::size_t j = 0; j < m.columnNames.size(); ++j) vals[m.columnNames[j]] = detail::tauJson(m.entries[i][j]);
    rows.push_back(Json{{"row", m.rowNames[i]}, {"tau", vals}});
  }
  return Json{{"columns", m.columnNames}, {"rows", rows}};
}

inline Json toJson(const DensityByGroup& d) {
  Json curves = Json::array();
  for (const auto& c : d.curves)
    curves.push_back(Json{{"group", c.group}, {"n", c.n}, {"x", detail::numArray(c.x)},
                          {"density", detail::numArray(c.density)}});
  return Json{{"kind", "density"}, {"variable", d.variable}, {"group_variable", d.groupVariable},
              {"bandwidth", d.bandwidth}, {"curves", curves}};
}

inline Json toJson(const FrequencyByGroup& f) {
  Json groups = Json::array();
  for (const auto& g : f.groups)
    groups.push_back(Json{{"group", g.group}, {"n", g.n}, {"counts", g.counts},
                          {"proportions", detail::numArray(g.proportions)}});
  return Json{{"kind", "frequency"}, {"variable", f.variable}, {"group_variable", f.groupVariable},
              {"levels", f.levels}, {"groups", groups}};
}

inline Json toJson(const ConfounderSummary& s) {
  return std::visit([](const auto& v) { return toJson(v); }, s);
}

inline Json toJson(const FairRidgeModel& m) {
  Json trace = Json::array();
  for (const auto& s : m.trace) trace.push_back(Json{{"lambda", s.lambda}, {"share", detail::num(s.share)}});
  Json j{{"family", familyName(m.family)},
         {"unfairness", m.unfairness},
         {"lambda_s", m.lambdaS},
         {"unfairness_share", detail::num(m.share)},
         {"summary", toJson(m.fit)},
         {"trace", trace}};
  if (!m.note.empty()) j["note"] = m.note;
  return j;
}

inline Json toJson(const FairnessUtilityReport& r) {
  Json reps = Json::array();
  for (const auto& rr : r.replications) {
    Json taus = Json::object();
    for (std::size_t l = 0; l < r.levels.size(); ++l) taus[r.levels[l]] = detail::tauJson(rr.taus[l]);
    Json j{{"seed", rr.seed}, {"holdout_size", rr.holdoutSize}, {"utility", detail::num(rr.utility)},
           {"mape", detail::num(rr.mape)}};
    j["misclassification"] = rr.misclassification ? detail::num(*rr.misclassification) : Json(nullptr);
    j["tau"] = taus;
    j["max_abs_tau"] = rr.maxAbsTau ? detail::num(*rr.maxAbsTau) : Json(nullptr);
    reps.push_back(std::move(j));
  }
  Json meanTau = Json::object();
  for (std::size_t l = 0; l < r.levels.size(); ++l)
    meanTau[r.levels[l]] = r.meanTau[l] ? detail::num(*r.meanTau[l]) : Json(nullptr);
  return Json{{"utility_metric", r.utilityMetric},
              {"replications", r.replications.size()},
              {"seeds", r.seedList},
              {"mean_utility", detail::num(r.meanUtility)},
              {"mean_tau", meanTau},
              {"mean_max_abs_tau", r.meanMaxAbsTau ? detail::num(*r.meanMaxAbsTau) : Json(nullptr)},
              {"per_replication", reps}};
}

inline Json toJson(const MatchResult& r) {
  return Json{{"estimand", r.estimand},
              {"treat_level", r.treatLevel},
              {"propensity", r.propensity},
              {"estimate", detail::num(r.estimate)},
              {"std_error", detail::num(r.standardError)},
              {"t_stat", detail::num(r.tStat)},
              {"p_value", detail::num(r.pValue)},
              {"n_original", r.nOriginal},
              {"n_treated", r.nTreated},
              {"n_matched", r.nMatched},
              {"n_matched_pairs", r.nMatchedPairs},
              {"n_controls_used", r.nControlsUsed}};
}

inline Json toJson(const CausalGraph& g) {
  Json dir = Json::array(), und = Json::array();
  for (const auto& [a, b] : g.directedEdges) dir.push_back(Json{{"from", a}, {"to", b}});
  for (const auto& [a, b] : g.undirectedEdges) und.push_back(Json::array({a, b}));
  Json mb = Json::object();
  for (const auto& [k, v] : g.blankets) mb[k] = v;
  return Json{{"alpha", g.alpha}, {"nodes", g.nodes}, {"directed", dir}, {"undirected", und}, {"blankets", mb}};
}

inline Json toJson(const PlotDocument& d) {
  Json axes = Json::array();
  for (const auto& a : d.axes) {
    Json j{{"label", a.label}, {"range", Json::array({a.min, a.max})}, {"ticks", detail::numArray(a.ticks)}};
    if (!a.tickLabels.empty()) j["tick_labels"] = a.tickLabels;
    axes.push_back(std::move(j));
  }
  Json layers = Json::array();
  for (const auto& l : d.layers) {
    Json coords = Json::array();
    for (const auto& c : l.coordinates) coords.push_back(Json::array({detail::num(c[0]), detail::num(c[1])}));
    layers.push_back(Json{{"kind", layerKindName(l.kind)}, {"group", l.groupLabel}, {"style", l.styleKey},
                          {"size", l.size}, {"coordinates", coords}});
  }
  Json legend = Json::array();
  for (const auto& e : d.legend) legend.push_back(Json{{"group", e.group}, {"style", e.styleKey}});
  return Json{{"title", d.title}, {"axes", axes}, {"layers", layers}, {"legend", legend}};
}

inline Json toJson(const Scatter3DResult& r, const std::string& sName) {
  Json pts = Json::array();
  for (const auto& t : r.tuples)
    pts.push_back(Json{{r.names[0], t.x}, {r.names[1], t.y}, {r.names[2], t.z}, {sName, t.level}});
  return Json{{"columns", r.names}, {"group_variable", sName}, {"points", pts}};
}

// ---------------------------------------------------------------------------
// Saved models

inline Json toJson(const KnnModel& m) {
  Json w = Json::object();
  for (const auto& [k, v] : m.sourceWeights) w[k] = v;
  return Json{{"format", "fairscope-knn"},
              {"version", kModelFormatVersion},
              {"y", m.yName},
              {"k", m.k},
              {"encoder", detail::encoderJson(m.encoder)},
              {"feature_weights", w},
              {"means", m.means},
              {"sds", m.sds},
              {"binary", m.binary},
              {"positive_level", m.positiveLevel ? Json(*m.positiveLevel) : Json(nullptr)},
              {"train", detail::matrixJson(m.train)},
              {"train_y", detail::numArray(m.trainY)}};
}

inline Json toJson(const ForestModel& m) {
  Json trees = Json::array();
  for (const auto& t : m.trees) {
    Json nodes = Json::array();
    for (const auto& n : t.nodes) {
      if (n.feature < 0)
        nodes.push_back(Json{{"n", n.count}, {"value", detail::numArray(n.value)}});
      else
        nodes.push_back(Json{{"n", n.count}, {"feature", n.feature}, {"threshold", n.threshold},
                             {"left", n.left}, {"right", n.right}});
    }
    trees.push_back(std::move(nodes));
  }
  return Json{{"format", "fairscope-forest"},
              {"version", kModelFormatVersion},
              {"y", m.yName},
              {"classification", m.classification},
              {"classes", m.classLabels},
              {"encoder", detail::encoderJson(m.encoder)},
              {"split_weights", m.columnWeights},
              {"n_trees", m.nTrees},
              {"mtry", m.mtry},
              {"min_node_size", m.minNodeSize},
              {"seed", m.seed},
              {"trees", trees}};
}

inline Json toJson(const EdfModel& m) {
  Json w = Json::object();
  for (const auto& [k, v] : m.deweight) w[k] = v;
  Json j{{"method", edfMethodName(m.method)}, {"y", m.spec.yName}, {"features", m.spec.xNames}, {"deweight", w}};
  if (m.linear) {
    j["family"] = familyName(m.linear->family);
    j["summary_standardized"] = toJson(m.linear->fit);
    j["penalties"] = m.linear->penalties;
  }
  if (m.knn) j["k"] = m.knn->k;
  if (m.forest) j["n_trees"] = m.forest->nTrees;
  return j;
}

// ---------------------------------------------------------------------------
// Loading saved models

namespace detail {

inline void requireFormat(const Json& j, const std::string& format) {
  if (!j.is_object() || j.value("format", std::string()) != format)
    throw DataError("not a " + format + " document");
  if (j.value("version", 0) != kModelFormatVersion)
    throw DataError(format + " version " + std::to_string(j.value("version", 0)) + " is not supported");
}

inline DesignEncoder encoderFromJson(const Json& j) {
  std::vector<DesignEncoder::Term> terms;
  for (const auto& t : j.at("terms")) {
    DesignEncoder::Term term;
    term.name = t.at("name").get<std::string>();
    term.numeric = t.at("type").get<std::string>() == "numeric";
    if (!term.numeric) term.levels = t.at("levels").get<std::vector<std::string>>();
    terms.push_back(std::move(term));
  }
  return DesignEncoder::fromTerms(j.at("intercept").get<bool>(), std::move(terms));
}

inline std::vector<double> doublesFromJson(const Json& j) {
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError("saved model holds a non-numeric value");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

inline KnnModel knnFromJson(const Json& j) {
  detail::requireFormat(j, "fairscope-knn");
  try {
    KnnModel m;
    m.yName = j.at("y").get<std::string>();
    m.k = j.at("k").get<std::size_t>();
    m.encoder = detail::encoderFromJson(j.at("encoder"));
    for (const auto& [k, v] : j.at("feature_weights").items()) m.sourceWeights[k] = v.get<double>();
    m.means = detail::doublesFromJson(j.at("means"));
    m.sds = detail::doublesFromJson(j.at("sds"));
    m.binary = j.at("binary").get<bool>();
    if (!j.at("positive_level").is_null()) m.positiveLevel = j.at("positive_level").get<std::string>();
    const auto cols = m.encoder.columns();
    m.columnWeights.clear();
    for (const auto& c : cols) {
      auto it = m.sourceWeights.find(c.source);
      m.columnWeights.push_back(it == m.sourceWeights.end() ? 1.0 : it->second);
    }
    const auto& rows = j.at("train");
    const auto p = static_cast<Eigen::Index>(cols.size());
    if (m.means.size() != cols.size() || m.sds.size() != cols.size())
      throw DataError("saved kNN model has inconsistent feature counts");
    m.train.resize(static_cast<Eigen::Index>(rows.size()), p);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto r = detail::doublesFromJson(rows[i]);
      if (static_cast<Eigen::Index>(r.size()) != p) throw DataError("saved kNN row has the wrong width");
      for (Eigen::Index c = 0; c < p; ++c) m.train(static_cast<Eigen::Index>(i), c) = r[static_cast<std::size_t>(c)];
    }
    auto y = detail::doublesFromJson(j.at("train_y"));
    if (y.size() != rows.size()) throw DataError("saved kNN model has inconsistent row counts");
    m.trainY = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    if (m.k == 0 || m.k > y.size()) throw DataError("saved kNN model has an invalid k");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed kNN model: ") + e.what());
  }
}

inline ForestModel forestFromJson(const Json& j) {
  detail::requireFormat(j, "fairscope-forest");
  try {
    ForestModel m;
    m.yName = j.at("y").get<std::string>();
    m.classification = j.at("classification").get<bool>();
    m.classLabels = j.at("classes").get<std::vector<std::string>>();
    m.encoder = detail::encoderFromJson(j.at("encoder"));
    m.columnWeights = detail::doublesFromJson(j.at("split_weights"));
    m.nTrees = j.at("n_trees").get<std::size_t>();
    m.mtry = j.at("mtry").get<std::size_t>();
    m.minNodeSize = j.at("min_node_size").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto width = static_cast<int>(m.encoder.width());
    for (const auto& jt : j.at("trees")) {
      Tree t;
      for (const auto& jn : jt) {
        TreeNode n;
        n.count = jn.at("n").get<std::size_t>();
        if (jn.contains("feature")) {
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
        } else {
          n.value = detail::doublesFromJson(jn.at("value"));
          if (n.value.size() != m.classCount()) throw DataError("saved forest leaf has the wrong width");
        }
        t.nodes.push_back(std::move(n));
      }
      const int size = static_cast<int>(t.nodes.size());
      if (size == 0) throw DataError("saved forest has an empty tree");
      for (const auto& n : t.nodes)
        if (n.feature >= 0 && (n.feature >= width || n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size))
          throw DataError("saved forest has an invalid node");
      m.trees.push_back(std::move(t));
    }
    if (m.trees.size() != m.nTrees) throw DataError("saved forest tree count does not match");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed forest model: ") + e.what());
  }
}

}  // namespace fairscope
