// fairscope command-line front end.
//
// Exit codes: 0 success, 1 data or model error, 2 usage error.
// Outputs are collected in memory and written only when the analysis
// succeeds, together with manifest.json.

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>

#include "fairscope/fairscope.hpp"

namespace fs = std::filesystem;
using namespace fairscope;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> warnings;

  void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }
  void json(const std::string& name, const Json& j) { add(name, j.dump(2) + "\n"); }
};

struct Common {
  std::string data;
  std::string y;
  std::string s;
  std::string out = "fairscope-out";
  std::string format = "json";
  std::optional<std::uint64_t> seed;
};

struct Input {
  std::string path;
  std::string sha256;
  Table table;
  std::size_t dropped = 0;
};

std::string sha256Hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Table loadTable(const std::string& path, Outputs& out, const std::string& what) {
  auto r = parseCsv(readFile(path), fs::path(path).stem().string());
  if (r.droppedRows)
    out.warnings.push_back(what + ": dropped " + std::to_string(r.droppedRows) + " rows with missing values");
  return r.table;
}

std::string csvLine(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s += ',';
    s += detail::quoteCsv(cells[i]);
  }
  return s + "\n";
}

std::string num(double v) { return std::isfinite(v) ? formatDouble(v) : "NA"; }

std::string coefficientsCsv(const FitSummary& f, const std::string& level = "") {
  std::string s;
  for (std::size_t i = 0; i < f.coefficientNames.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    std::vector<std::string> row;
    if (!level.empty()) row.push_back(level);
    row.insert(row.end(), {f.coefficientNames[i], num(f.estimates[k]), num(f.standardErrors[k]), num(f.pValues[k])});
    s += csvLine(row);
  }
  return s;
}

std::string comparisonsCsv(const SComparisonReport& r) {
  std::string s = csvLine({"comparison", "point", "estimate", "std_error", "p_value", "scale"});
  for (const auto& row : r.rows)
    s += csvLine({row.label(), row.pointIndex ? std::to_string(*row.pointIndex + 1) : "", num(row.estimate),
                  num(row.standardError), num(row.pValue), r.scale});
  return s;
}

std::string predictionsCsv(const Eigen::VectorXd& p) {
  std::string s = "prediction\n";
  for (Eigen::Index i = 0; i < p.size(); ++i) s += num(p[i]) + "\n";
  return s;
}

std::map<std::string, double> parseDeweights(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--deweight expects name=weight, got '" + item + "'");
    auto w = detail::parseNumber(item.substr(eq + 1));
    if (!w) throw UsageError("--deweight weight in '" + item + "' is not a number");
    if (*w < 0.0 || *w > 1.0) throw UsageError("--deweight weight in '" + item + "' must be in [0, 1]");
    if (!out.emplace(item.substr(0, eq), *w).second)
      throw UsageError("feature '" + item.substr(0, eq) + "' deweighted twice");
  }
  return out;
}

std::string safeName(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

Json warningsJson(const std::vector<std::string>& w) { return Json(w); }

std::string utcNow() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Subcommand option blocks

struct ModelOpts {
  bool interactions = false;
  bool sandwich = false;
  std::string comparePoints;
  std::string predict;
};

struct KnnOpts {
  std::size_t k = kDefaultK;
  std::string predict;
  std::string loadModel;
};

struct ForestOpts {
  std::size_t nTrees = 100;
  std::size_t mtry = 0;
  std::size_t minNodeSize = 5;
  std::string predict;
  std::string loadModel;
  bool importance = false;
  std::size_t repeats = 5;
};

struct HuntOpts {
  std::size_t intersectDepth = 10;
  std::size_t nTrees = 100;
  std::size_t repeats = 5;
  std::vector<std::string> features;
  double bandwidth = kDefaultBandwidth;
  int width = 720, height = 480;
};

struct FairOpts {
  double unfairness = 1.0;
  std::string family = "auto";
  std::vector<std::string> deweight;
  std::size_t k = kDefaultK;
  std::size_t nTrees = 100;
  std::string predict;
  std::string method = "fair-ridge";
  std::size_t replications = 5;
  double holdoutFraction = 0.0;
};

struct MatchOpts {
  std::string treat;
  std::string propensity = "none";
  std::size_t k = 50;
};

struct IambOpts {
  double alpha = 0.05;
  std::vector<std::string> columns;
};

struct PlotOpts {
  std::string x;
  std::string column;
  std::vector<std::string> condits;
  std::vector<std::string> columns;
  std::size_t k = 0;
  std::size_t m = 0;
  double bandwidth = kDefaultBandwidth;
  double pointSize = kDefaultPointSize;
  int width = 720, height = 480;
};

Family resolveFamily(const std::string& f, const Table& t, const std::string& y) {
  if (f == "linear") return Family::Linear;
  if (f == "logistic") return Family::Logistic;
  return encodeResponse(t, y).binary ? Family::Logistic : Family::Linear;
}

ModelSpec specWithS(const Table& t, const Common& c) { return ModelSpec::fromTable(t, c.y, c.s); }

ModelSpec specMaybeS(const Table& t, const Common& c) {
  return c.s.empty() ? ModelSpec::fromTable(t, c.y) : ModelSpec::fromTable(t, c.y, c.s);
}

// Drops S when given, so S never acts as a feature.
ModelSpec featureSpec(const Table& t, const Common& c) {
  ModelSpec spec = specMaybeS(t, c);
  return ModelSpec{spec.yName, std::nullopt, spec.xNames};
}

template <typename Fit>
void writeSModel(const SModel<Fit>& m, const SComparisonReport& cmp, const Common& c, const std::string& stem,
                 Outputs& out) {
  if (c.format == "csv") {
    std::string coefs;
    if (m.pooled) {
      coefs = csvLine({"term", "estimate", "std_error", "p_value"}) + coefficientsCsv(*m.pooled);
    } else {
      coefs = csvLine({"level", "term", "estimate", "std_error", "p_value"});
      for (const auto& lf : m.perLevel) coefs += coefficientsCsv(lf.fit, lf.level);
    }
    out.add(stem + "_coefficients.csv", coefs);
    out.add(stem + "_comparisons.csv", comparisonsCsv(cmp));
    return;
  }
  Json j = toJson(m);
  j.update(toJson(cmp));
  j["warnings"] = warningsJson(out.warnings);
  out.json(stem + ".json", j);
}

// ---------------------------------------------------------------------------
// Handlers

void runLin(const Input& in, const Common& c, const ModelOpts& o, Outputs& out) {
  const Table& t = in.table;
  ModelSpec spec = specWithS(t, c);
  LinearSModel m = fitLinearS(t, spec, o.interactions, o.sandwich);
  SComparisonReport cmp;
  if (!o.interactions) {
    cmp = compareLevelsNoInteraction(m);
  } else if (!o.comparePoints.empty()) {
    cmp = compareLevelsWithInteraction(m, loadTable(o.comparePoints, out, "compare points"));
  }
  if (!o.predict.empty()) out.add("predictions.csv", predictionsCsv(predictLinear(m, loadTable(o.predict, out, "predict rows"))));
  writeSModel(m, cmp, c, "lin", out);
}

void runLogit(const Input& in, const Common& c, const ModelOpts& o, Outputs& out) {
  const Table& t = in.table;
  ModelSpec spec = specWithS(t, c);
  LogitSModel m = fitLogitS(t, spec, o.interactions);
  SComparisonReport cmp;
  if (!o.interactions) {
    cmp = compareLevelsNoInteraction(m);
    cmp.scale = "log-odds";
  } else if (!o.comparePoints.empty()) {
    cmp = compareLevelsLogit(m, loadTable(o.comparePoints, out, "compare points"));
  } else {
    cmp.scale = "probability";
  }
  if (!o.predict.empty()) {
    Table rows = loadTable(o.predict, out, "predict rows");
    Eigen::VectorXd p(static_cast<Eigen::Index>(rows.nrows()));
    if (m.pooled) {
      p = predictProb(*m.pooled, m.pooledEncoder, rows);
    } else {
      for (const auto& lf : m.perLevel) {
        auto idx = detail::rowsWithLevel(rows, spec.s(), lf.level);
        if (idx.empty()) continue;
        Eigen::VectorXd q = predictProb(lf.fit, lf.encoder, rows.rows(idx));
        for (std::size_t k = 0; k < idx.size(); ++k) p[static_cast<Eigen::Index>(idx[k])] = q[static_cast<Eigen::Index>(k)];
      }
      const auto& f = rows.column(spec.s()).factor();
      for (std::size_t i = 0; i < rows.nrows(); ++i)
        if (std::find(m.levels.begin(), m.levels.end(), f.label(i)) == m.levels.end())
          throw DataError("level '" + f.label(i) + "' of " + spec.s() + " was not fitted");
    }
    out.add("predictions.csv", predictionsCsv(p));
  }
  writeSModel(m, cmp, c, "logit", out);
}

void runKnn(const Input& in, const Common& c, const KnnOpts& o, Outputs& out) {
  if (!o.loadModel.empty()) {
    KnnModel m = knnFromJson(Json::parse(readFile(o.loadModel), nullptr, false));
    out.add("predictions.csv", predictionsCsv(predictKnn(m, in.table)));
    return;
  }
  KnnModel m = fitKnn(in.table, featureSpec(in.table, c), o.k);
  out.json("knn_model.json", toJson(m));
  if (!o.predict.empty()) out.add("predictions.csv", predictionsCsv(predictKnn(m, loadTable(o.predict, out, "predict rows"))));
}

void runForest(const Input& in, const Common& c, const ForestOpts& o, std::uint64_t seed, Outputs& out) {
  if (!o.loadModel.empty()) {
    ForestModel m = forestFromJson(Json::parse(readFile(o.loadModel), nullptr, false));
    out.add("predictions.csv", predictionsCsv(predictForest(m, in.table)));
    return;
  }
  ForestParams p;
  p.nTrees = o.nTrees;
  if (o.mtry) p.mtry = o.mtry;
  p.minNodeSize = o.minNodeSize;
  p.seed = deriveSeed(seed, 1);
  ModelSpec spec = featureSpec(in.table, c);
  Table train = in.table;
  std::optional<Table> holdout;
  if (o.importance) {
    auto split = makeHoldout(in.table.nrows(), deriveSeed(seed, 0));
    train = in.table.rows(split.trainIndices);
    holdout = in.table.rows(split.holdoutIndices);
  }
  ForestModel m = fitForest(train, spec, p);
  out.json("forest_model.json", toJson(m));
  if (holdout) {
    ImportanceVector imp = permutationImportance(m, *holdout, o.repeats, deriveSeed(seed, 2));
    if (c.format == "csv") {
      std::string s = csvLine({"feature", "importance", "std_error"});
      for (const auto& name : imp.ranked()) {
        auto i = static_cast<std::size_t>(std::find(imp.features.begin(), imp.features.end(), name) - imp.features.begin());
        s += csvLine({name, num(imp.scores[i]), num(imp.standardErrors[i])});
      }
      out.add("importance.csv", s);
    } else {
      out.json("importance.json", toJson(imp));
    }
  }
  if (!o.predict.empty()) out.add("predictions.csv", predictionsCsv(predictForest(m, loadTable(o.predict, out, "predict rows"))));
}

void runChunt(const Input& in, const Common& c, const HuntOpts& o, std::uint64_t seed, Outputs& out) {
  ModelSpec spec = specWithS(in.table, c);
  std::size_t depth = o.intersectDepth;
  if (depth > spec.xNames.size()) {
    out.warnings.push_back("intersect depth " + std::to_string(depth) + " reduced to the feature count " +
                           std::to_string(spec.xNames.size()));
    depth = spec.xNames.size();
  }
  ForestParams p;
  p.nTrees = o.nTrees;
  ConfounderReport r = huntConfounders(in.table, spec, depth, p, seed, o.repeats);
  if (c.format == "csv") {
    std::string s = csvLine({"feature", "imp_for_y", "imp_for_s"});
    for (const auto& f : r.impForY.ranked()) s += csvLine({f, num(r.impForY.score(f)), num(r.impForS.score(f))});
    out.add("chunt_importance.csv", s);
    std::string inter = csvLine({"depth", "features"});
    for (std::size_t i = 0; i < r.intersections.size(); ++i) {
      std::string joined;
      for (const auto& f : r.intersections[i]) joined += (joined.empty() ? "" : ";") + f;
      inter += csvLine({std::to_string(i + 1), joined});
    }
    out.add("chunt_intersections.csv", inter);
    return;
  }
  Json j = toJson(r);
  j["warnings"] = warningsJson(out.warnings);
  out.json("chunt.json", j);
}

void runOhunt(const Input& in, const Common& c, Outputs& out) {
  TauMatrix m = huntProxies(in.table, specWithS(in.table, c));
  if (c.format == "csv") {
    std::ostringstream ss;
    writeTauCsv(m, ss);
    out.add("ohunt.csv", ss.str());
  } else {
    out.json("ohunt.json", toJson(m));
  }
}

void runConfounders(const Input& in, const Common& c, const HuntOpts& o, Outputs& out) {
  ModelSpec spec = specWithS(in.table, c);
  std::vector<std::string> features = o.features.empty() ? spec.xNames : o.features;
  Json all = Json::object();
  for (const auto& f : features) {
    ConfounderSummary s = confounderSummary(in.table, spec, f, o.bandwidth);
    all[f] = toJson(s);
    out.add("confounder_" + safeName(f) + ".svg", renderSvg(confounderDocument(s), o.width, o.height));
    if (c.format == "csv") {
      std::string csv;
      if (auto fr = std::get_if<FrequencyByGroup>(&s)) {
        csv = csvLine({c.s, f, "count", "proportion"});
        for (const auto& g : fr->groups)
          for (std::size_t l = 0; l < fr->levels.size(); ++l)
            csv += csvLine({g.group, fr->levels[l], std::to_string(g.counts[l]), num(g.proportions[l])});
      } else {
        const auto& d = std::get<DensityByGroup>(s);
        csv = csvLine({c.s, f, "density"});
        for (const auto& curve : d.curves)
          for (std::size_t i = 0; i < curve.x.size(); ++i) csv += csvLine({curve.group, num(curve.x[i]), num(curve.density[i])});
      }
      out.add("confounder_" + safeName(f) + ".csv", csv);
    }
  }
  if (c.format == "json") out.json("confounders.json", all);
}

void runFairRidge(const Input& in, const Common& c, const FairOpts& o, Outputs& out) {
  ModelSpec spec = specWithS(in.table, c);
  FairRidgeModel m = fitFairRidge(in.table, spec, o.unfairness, resolveFamily(o.family, in.table, c.y));
  if (c.format == "csv")
    out.add("fair_ridge_coefficients.csv", csvLine({"term", "estimate", "std_error", "p_value"}) + coefficientsCsv(m.fit));
  else
    out.json("fair_ridge.json", toJson(m));
  if (!o.predict.empty()) out.add("predictions.csv", predictionsCsv(predictFairRidge(m, loadTable(o.predict, out, "predict rows"))));
}

EdfMethod edfMethodFor(const std::string& sub) {
  if (sub == "fair-knn") return EdfMethod::Knn;
  if (sub == "fair-lin") return EdfMethod::Linear;
  return EdfMethod::Forest;
}

void runEdf(const std::string& sub, const Input& in, const Common& c, const FairOpts& o, std::uint64_t seed,
            Outputs& out) {
  ModelSpec spec = specWithS(in.table, c);
  EdfHyper h;
  h.k = o.k;
  h.forest.nTrees = o.nTrees;
  EdfModel m = fitEdf(in.table, spec, edfMethodFor(sub), parseDeweights(o.deweight), h, seed);
  out.json("edf.json", toJson(m));
  if (!o.predict.empty()) out.add("predictions.csv", predictionsCsv(predictEdf(m, loadTable(o.predict, out, "predict rows"))));
}

void runEval(const Input& in, const Common& c, const FairOpts& o, std::uint64_t seed, Outputs& out) {
  ModelSpec spec = specWithS(in.table, c);
  auto deweight = parseDeweights(o.deweight);
  ModelFactory factory;
  if (o.method == "fair-ridge") {
    Family fam = resolveFamily(o.family, in.table, c.y);
    factory = [&, fam](const Table& train, std::uint64_t) -> Predictor {
      auto m = std::make_shared<FairRidgeModel>(fitFairRidge(train, spec, o.unfairness, fam));
      return [m](const Table& rows) { return predictFairRidge(*m, rows); };
    };
  } else {
    EdfMethod method = edfMethodFor(o.method);
    factory = [&, method](const Table& train, std::uint64_t s) -> Predictor {
      EdfHyper h;
      h.k = o.k;
      h.forest.nTrees = o.nTrees;
      auto m = std::make_shared<EdfModel>(fitEdf(train, spec, method, deweight, h, s));
      return [m](const Table& rows) { return predictEdf(*m, rows); };
    };
  }
  std::optional<double> frac;
  if (o.holdoutFraction > 0.0) frac = o.holdoutFraction;
  FairnessUtilityReport r = evaluateFairness(in.table, spec, factory, o.replications, seed, frac);
  if (c.format == "csv") {
    std::ostringstream ss;
    writeFairnessCsv(r, ss);
    out.add("eval.csv", ss.str());
  } else {
    Json j = toJson(r);
    j["method"] = o.method;
    out.json("eval.json", j);
  }
}

void runMatch(const Input& in, const Common& c, const MatchOpts& o, Outputs& out) {
  ModelSpec spec = specWithS(in.table, c);
  Propensity p = o.propensity == "logit" ? Propensity::logit()
                 : o.propensity == "knn" ? Propensity::knn(o.k)
                                         : Propensity::none();
  MatchResult r = matchedATE(in.table, spec, o.treat, p);
  if (c.format == "csv") {
    out.add("match.csv", csvLine({"estimand", "propensity", "estimate", "std_error", "t_stat", "p_value", "n_original",
                                  "n_treated", "n_matched"}) +
                             csvLine({r.estimand, r.propensity, num(r.estimate), num(r.standardError), num(r.tStat),
                                      num(r.pValue), std::to_string(r.nOriginal), std::to_string(r.nTreated),
                                      std::to_string(r.nMatched)}));
  } else {
    out.json("match.json", toJson(r));
  }
}

void runIamb(const Input& in, const IambOpts& o, Outputs& out) {
  Table t = in.table;
  if (!o.columns.empty()) t = t.select(o.columns);
  for (const auto& col : t.columns())
    if (col.isFactor()) out.warnings.push_back("factor column '" + col.name() + "' coerced to level codes");
  CausalGraph g = iamb(numericView(t), o.alpha);
  Json j = toJson(g);
  j["warnings"] = warningsJson(out.warnings);
  out.json("iamb.json", j);
  out.add("iamb.dot", toDot(g));
}

void runPlot(const std::string& sub, const Input& in, const Common& c, const PlotOpts& o, Outputs& out) {
  const Table& t = in.table;
  if (sub == "plot-disparity") {
    FigureResult f = conditDisparity(t, c.y, c.s, o.x, o.condits, o.k ? o.k : kDisparityK);
    for (const auto& w : f.warnings) out.warnings.push_back(w);
    out.add("disparity.svg", renderSvg(f.doc, o.width, o.height));
    Json j = toJson(f.doc);
    j["warnings"] = warningsJson(out.warnings);
    out.json("disparity.json", j);
  } else if (sub == "plot-density") {
    DensityFigure f = densityByGroup(t, o.column, c.s, o.bandwidth);
    out.add("density.svg", renderSvg(f.doc, o.width, o.height));
    out.json("density.json", Json{{"data", toJson(f.data)}, {"plot", toJson(f.doc)}});
  } else if (sub == "plot-parcoord") {
    ParCoordResult r = freqParCoord(t, o.m, c.s, o.k ? o.k : 5, o.columns);
    for (const auto& w : r.warnings) out.warnings.push_back(w);
    out.add("parcoord.svg", renderSvg(r.doc, o.width, o.height));
    Json sel = Json::object();
    for (const auto& [level, rows] : r.selected) {
      Json one = Json::array();
      for (auto i : rows) one.push_back(i + 1);
      sel[level] = one;
    }
    out.json("parcoord.json", Json{{"columns", r.columns}, {"selected_rows", sel}, {"plot", toJson(r.doc)},
                                   {"warnings", warningsJson(out.warnings)}});
  } else {
    Scatter3DResult r = scatter3D(t, {o.columns[0], o.columns[1], o.columns[2]}, c.s, o.pointSize);
    out.add("scatter3d.svg", renderSvg(r.doc, o.width, o.height));
    if (c.format == "csv") {
      std::ostringstream ss;
      writeScatterCsv(r, c.s, ss);
      out.add("scatter3d.csv", ss.str());
    } else {
      out.json("scatter3d.json", toJson(r, c.s));
    }
    out.json("scatter3d_plot.json", toJson(r.doc));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairscope: discrimination analysis and fairness-constrained prediction"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Common c;
  ModelOpts model;
  KnnOpts knn;
  ForestOpts forest;
  HuntOpts hunt;
  FairOpts fair;
  MatchOpts match;
  IambOpts iambOpts;
  PlotOpts plot;

  auto common = [&](CLI::App* sub, bool needY, bool needS, bool yOptional = false) {
    sub->add_option("--data", c.data, "Input CSV file")->required()->check(CLI::ExistingFile);
    if (needY) {
      auto* y = sub->add_option("--y", c.y, "Response column");
      if (!yOptional) y->required();
    }
    if (needS) sub->add_option("--s", c.s, "Sensitive (group) column")->required();
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", c.seed, "Random seed (default: FAIRSCOPE_SEED, else 1)");
    sub->add_option("--format", c.format, "Table output format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
  };

  auto* lin = app.add_subcommand("lin", "Linear model with sensitive-level comparisons");
  auto* logit = app.add_subcommand("logit", "Logistic model with sensitive-level comparisons");
  for (auto* sub : {lin, logit}) {
    common(sub, true, true);
    sub->add_flag("--interactions", model.interactions, "Fit each S level separately");
    sub->add_option("--compare-points", model.comparePoints, "CSV of covariate rows for level comparisons")
        ->check(CLI::ExistingFile);
    sub->add_option("--predict", model.predict, "CSV of rows to predict")->check(CLI::ExistingFile);
  }
  lin->add_flag("--sandwich", model.sandwich, "Heteroskedasticity-robust (HC0) covariance");

  auto* knnCmd = app.add_subcommand("knn", "k-nearest-neighbor regression (S excluded when given)");
  common(knnCmd, true, false, true);
  knnCmd->add_option("--s", c.s, "Sensitive column to exclude from the features");
  knnCmd->add_option("--k", knn.k, "Number of neighbors")->capture_default_str()->check(CLI::PositiveNumber);
  knnCmd->add_option("--predict", knn.predict, "CSV of rows to predict")->check(CLI::ExistingFile);
  knnCmd->add_option("--load-model", knn.loadModel, "Saved knn_model.json; --data rows are predicted")
      ->check(CLI::ExistingFile);

  auto* forestCmd = app.add_subcommand("forest", "Random forest (S excluded when given)");
  common(forestCmd, true, false, true);
  forestCmd->add_option("--s", c.s, "Sensitive column to exclude from the features");
  forestCmd->add_option("--ntrees", forest.nTrees, "Number of trees")->capture_default_str()->check(CLI::PositiveNumber);
  forestCmd->add_option("--mtry", forest.mtry, "Features tried per split (default ceil(sqrt(p)))");
  forestCmd->add_option("--min-node-size", forest.minNodeSize, "Minimum leaf size")->capture_default_str()->check(CLI::PositiveNumber);
  forestCmd->add_flag("--importance", forest.importance, "Fit on a training split and report holdout permutation importance");
  forestCmd->add_option("--repeats", forest.repeats, "Permutations per feature")->capture_default_str();
  forestCmd->add_option("--predict", forest.predict, "CSV of rows to predict")->check(CLI::ExistingFile);
  forestCmd->add_option("--load-model", forest.loadModel, "Saved forest_model.json; --data rows are predicted")
      ->check(CLI::ExistingFile);

  auto* chunt = app.add_subcommand("chunt", "Confounder hunting by forest importances");
  common(chunt, true, true);
  chunt->add_option("--intersect-depth", hunt.intersectDepth, "Largest top-i intersection")->capture_default_str()->check(CLI::PositiveNumber);
  chunt->add_option("--ntrees", hunt.nTrees, "Trees per forest")->capture_default_str()->check(CLI::PositiveNumber);
  chunt->add_option("--repeats", hunt.repeats, "Permutations per feature")->capture_default_str()->check(CLI::PositiveNumber);

  auto* ohunt = app.add_subcommand("ohunt", "Proxy hunting by Kendall tau against S levels");
  common(ohunt, true, true);

  auto* conf = app.add_subcommand("confounders", "Per-feature density or frequency by S level");
  common(conf, true, true);
  conf->add_option("--feature", hunt.features, "Feature to summarize (repeatable; default all)");
  conf->add_option("--bandwidth", hunt.bandwidth, "KDE bandwidth for numeric features")->capture_default_str()->check(CLI::PositiveNumber);
  conf->add_option("--width", hunt.width, "SVG width")->capture_default_str()->check(CLI::PositiveNumber);
  conf->add_option("--height", hunt.height, "SVG height")->capture_default_str()->check(CLI::PositiveNumber);

  auto* ridge = app.add_subcommand("fair-ridge", "Ridge penalty on S under an unfairness budget");
  common(ridge, true, true);
  ridge->add_option("--unfairness", fair.unfairness, "Budget in (0, 1]")->required()->check(CLI::Range(1e-300, 1.0));
  ridge->add_option("--family", fair.family, "Model family")->check(CLI::IsMember({"auto", "linear", "logistic"}))->capture_default_str();
  ridge->add_option("--predict", fair.predict, "CSV of rows to predict")->check(CLI::ExistingFile);

  auto* fknn = app.add_subcommand("fair-knn", "kNN with S dropped and deweighted proxies");
  auto* flin = app.add_subcommand("fair-lin", "Linear/logistic with S dropped and per-feature ridge");
  auto* fforest = app.add_subcommand("fair-forest", "Forest with S dropped and damped split probabilities");
  for (auto* sub : {fknn, flin, fforest}) {
    common(sub, true, true);
    sub->add_option("--deweight", fair.deweight, "name=weight in [0,1] (repeatable)");
    sub->add_option("--predict", fair.predict, "CSV of rows to predict")->check(CLI::ExistingFile);
  }
  fknn->add_option("--k", fair.k, "Number of neighbors")->capture_default_str()->check(CLI::PositiveNumber);
  fforest->add_option("--ntrees", fair.nTrees, "Number of trees")->capture_default_str()->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Fairness and utility over holdout replications");
  common(eval, true, true);
  eval->add_option("--method", fair.method, "Model to evaluate")
      ->check(CLI::IsMember({"fair-ridge", "fair-knn", "fair-lin", "fair-forest"}))
      ->capture_default_str();
  eval->add_option("--unfairness", fair.unfairness, "Budget for fair-ridge")->capture_default_str()->check(CLI::Range(1e-300, 1.0));
  eval->add_option("--family", fair.family, "Family for fair-ridge")->check(CLI::IsMember({"auto", "linear", "logistic"}))->capture_default_str();
  eval->add_option("--deweight", fair.deweight, "name=weight in [0,1] (repeatable)");
  eval->add_option("--k", fair.k, "Neighbors for fair-knn")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--ntrees", fair.nTrees, "Trees for fair-forest")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--replications", fair.replications, "Holdout replications")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--holdout-fraction", fair.holdoutFraction, "Holdout share (default floor(min(1000, 0.1 n)) rows)")
      ->check(CLI::Range(0.0, 1.0));

  auto* matchCmd = app.add_subcommand("match", "Matched-pairs treatment effect on the treated");
  common(matchCmd, true, true);
  matchCmd->add_option("--treat", match.treat, "Level of --s that is the treatment")->required();
  matchCmd->add_option("--propensity", match.propensity, "Matching metric")
      ->check(CLI::IsMember({"none", "logit", "knn"}))
      ->capture_default_str();
  matchCmd->add_option("--k", match.k, "Neighbors for knn propensity")->capture_default_str()->check(CLI::PositiveNumber);

  auto* iambCmd = app.add_subcommand("iamb", "Markov-blanket structure learning");
  common(iambCmd, false, false);
  iambCmd->add_option("--alpha", iambOpts.alpha, "Significance level")->capture_default_str()->check(CLI::Range(1e-300, 0.999999));
  iambCmd->add_option("--columns", iambOpts.columns, "Columns to use (default all)");

  auto* pdisp = app.add_subcommand("plot-disparity", "Smoothed Y against one covariate per S level");
  common(pdisp, true, true);
  pdisp->add_option("--x", plot.x, "Numeric covariate for the horizontal axis")->required();
  pdisp->add_option("--condit", plot.condits, "Row filter 'column op value' (repeatable)");
  pdisp->add_option("--k", plot.k, "Smoother neighbors (default 50)")->check(CLI::PositiveNumber);

  auto* pdens = app.add_subcommand("plot-density", "Kernel density per S level");
  common(pdens, false, true);
  pdens->add_option("--column", plot.column, "Numeric column")->required();
  pdens->add_option("--bandwidth", plot.bandwidth, "Kernel bandwidth")->capture_default_str()->check(CLI::PositiveNumber);

  auto* ppar = app.add_subcommand("plot-parcoord", "Most frequent patterns as parallel coordinates");
  common(ppar, false, true);
  ppar->add_option("--m", plot.m, "Patterns per level")->required()->check(CLI::PositiveNumber);
  ppar->add_option("--k", plot.k, "Neighbors for the density score (default 5)")->check(CLI::PositiveNumber);
  ppar->add_option("--columns", plot.columns, "Columns to draw (default all but S)");

  auto* p3d = app.add_subcommand("plot-scatter3d", "Projected 3D scatter by S level");
  common(p3d, false, true);
  p3d->add_option("--columns", plot.columns, "Three numeric columns")->required()->expected(3);
  p3d->add_option("--point-size", plot.pointSize, "Point diameter")->capture_default_str()->check(CLI::PositiveNumber);

  for (auto* sub : {pdisp, pdens, ppar, p3d}) {
    sub->add_option("--width", plot.width, "SVG width")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--height", plot.height, "SVG height")->capture_default_str()->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();

  // usage checks that CLI11 cannot express
  std::uint64_t seed = 1;
  std::string seedSource = "default";
  try {
    if (c.seed) {
      seed = *c.seed;
      seedSource = "flag";
    } else if (const char* env = std::getenv("FAIRSCOPE_SEED"); env && *env) {
      std::uint64_t v = 0;
      auto res = std::from_chars(env, env + std::strlen(env), v);
      if (res.ec != std::errc() || *res.ptr != '\0') throw UsageError("FAIRSCOPE_SEED must be a nonnegative integer");
      seed = v;
      seedSource = "env";
    }
    if ((name == "knn" || name == "forest")) {
      const bool load = !(name == "knn" ? knn.loadModel : forest.loadModel).empty();
      if (!load && c.y.empty()) throw UsageError("--y is required unless --load-model is given");
    }
    if (name == "fair-knn" || name == "fair-lin" || name == "fair-forest" || name == "eval") parseDeweights(fair.deweight);
    if (name == "fair-ridge" && !(fair.unfairness > 0.0)) throw UsageError("--unfairness must be in (0, 1]");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  Input in;
  Outputs out;
  try {
    in.path = c.data;
    const std::string bytes = readFile(c.data);
    in.sha256 = sha256Hex(bytes);
    auto loaded = parseCsv(bytes, fs::path(c.data).stem().string());
    in.table = std::move(loaded.table);
    in.dropped = loaded.droppedRows;
    if (in.dropped)
      out.warnings.push_back("input: dropped " + std::to_string(in.dropped) + " rows with missing values");

    if (name == "lin") runLin(in, c, model, out);
    else if (name == "logit") runLogit(in, c, model, out);
    else if (name == "knn") runKnn(in, c, knn, out);
    else if (name == "forest") runForest(in, c, forest, seed, out);
    else if (name == "chunt") runChunt(in, c, hunt, seed, out);
    else if (name == "ohunt") runOhunt(in, c, out);
    else if (name == "confounders") runConfounders(in, c, hunt, out);
    else if (name == "fair-ridge") runFairRidge(in, c, fair, out);
    else if (name == "fair-knn" || name == "fair-lin" || name == "fair-forest") runEdf(name, in, c, fair, seed, out);
    else if (name == "eval") runEval(in, c, fair, seed, out);
    else if (name == "match") runMatch(in, c, match, out);
    else if (name == "iamb") runIamb(in, iambOpts, out);
    else runPlot(name, in, c, plot, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";

  Json manifest{{"tool", "fairscope"},
                {"version", FAIRSCOPE_VERSION},
                {"subcommand", name},
                {"argv", std::vector<std::string>(argv, argv + argc)},
                {"seed", seed},
                {"seed_source", seedSource},
                {"input", Json{{"path", in.path},
                               {"sha256", in.sha256},
                               {"rows", in.table.nrows()},
                               {"columns", in.table.names()},
                               {"dropped_rows", in.dropped}}}};
  Json files = Json::array();
  for (const auto& f : out.files) files.push_back(f.first);
  manifest["outputs"] = files;
  manifest["warnings"] = out.warnings;
  manifest["created_utc"] = utcNow();

  try {
    fs::create_directories(c.out);
    for (const auto& [file, content] : out.files) {
      std::ofstream f(fs::path(c.out) / file, std::ios::binary);
      f << content;
      if (!f) throw DataError("cannot write '" + (fs::path(c.out) / file).string() + "'");
    }
    std::ofstream m(fs::path(c.out) / "manifest.json", std::ios::binary);
    m << manifest.dump(2) << "\n";
    if (!m) throw DataError("cannot write manifest.json");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
