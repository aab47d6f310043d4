#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairscope/design.hpp"
#include "fairscope/error.hpp"
#include "fairscope/parallel.hpp"
#include "fairscope/rng.hpp"

namespace fairscope {

struct ForestParams {
  std::size_t nTrees = 100;
  std::optional<std::size_t> mtry;  // default ceil(sqrt(p))
  std::size_t minNodeSize = 5;
  // Relative probability of a covariate being tried at a split; missing = 1.
  std::map<std::string, double> splitProbabilities;
  std::uint64_t seed = 1;
  bool bootstrap = true;  // false grows every tree on all rows
};

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::size_t count = 0;
  std::vector<double> value;  // mean (regression) or class frequencies
};

struct Tree {
  std::vector<TreeNode> nodes;

  const TreeNode& leafFor(const double* x) const {
    const TreeNode* node = &nodes.front();
    while (node->feature >= 0)
      node = &nodes[x[node->feature] <= node->threshold ? node->left : node->right];
    return *node;
  }
};

// Regression forest for a numeric response; classification forest for a
// factor response (classes = observed levels, sorted).
struct ForestModel {
  std::string yName;
  bool classification = false;
  std::vector<std::string> classLabels;
  DesignEncoder encoder;
  std::vector<double> columnWeights;  // split sampling weight per design column
  std::size_t nTrees = 0;
  std::size_t mtry = 0;
  std::size_t minNodeSize = 0;
  std::uint64_t seed = 0;
  std::vector<Tree> trees;

  std::size_t classCount() const { return classification ? classLabels.size() : 1; }
};

namespace detail {

struct TreeBuilder {
  const RowMatrix& x;
  const std::vector<double>& y;  // response, or class index
  const ForestModel& model;
  Rng rng;
  Tree tree;

  std::vector<double> leafValue(const std::vector<std::size_t>& rows) const {
    if (!model.classification) {
      double s = 0.0;
      for (auto r : rows) s += y[r];
      return {s / static_cast<double>(rows.size())};
    }
    std::vector<double> freq(model.classCount(), 0.0);
    for (auto r : rows) freq[static_cast<std::size_t>(y[r])] += 1.0;
    for (auto& f : freq) f /= static_cast<double>(rows.size());
    return freq;
  }

  // Weighted sampling of up to mtry distinct features.
  std::vector<int> candidates() {
    std::vector<double> w = model.columnWeights;
    std::vector<int> out;
    for (std::size_t k = 0; k < model.mtry; ++k) {
      double total = std::accumulate(w.begin(), w.end(), 0.0);
      if (total <= 0.0) break;
      double u = rng.uniform() * total;
      std::size_t j = 0;
      for (; j + 1 < w.size(); ++j) {
        if (u < w[j]) break;
        u -= w[j];
      }
      while (w[j] <= 0.0) --j;  // guards against rounding at the upper end
      out.push_back(static_cast<int>(j));
      w[j] = 0.0;
    }
    return out;
  }

  // Midpoint, kept strictly below the right-hand value.
  static double splitPoint(double a, double b) {
    const double mid = 0.5 * (a + b);
    return mid < b ? mid : a;
  }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
  };

  Split bestSplit(const std::vector<std::size_t>& rows, double parentScore) {
    const std::size_t n = rows.size();
    const std::size_t minSize = model.minNodeSize;
    Split best;
    best.score = parentScore + 1e-12 * std::max(1.0, std::fabs(parentScore));
    std::vector<std::pair<double, double>> pts(n);
    const std::size_t nc = model.classCount();
    std::vector<double> leftCounts(nc), totalCounts(nc);
    for (int f : candidates()) {
      for (std::size_t i = 0; i < n; ++i) pts[i] = {x(static_cast<Eigen::Index>(rows[i]), f), y[rows[i]]};
      std::sort(pts.begin(), pts.end());
      if (pts.front().first == pts.back().first) continue;
      if (!model.classification) {
        double total = 0.0;
        for (const auto& pt : pts) total += pt.second;
        double left = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
          left += pts[i].second;
          const std::size_t nl = i + 1, nr = n - nl;
          if (pts[i].first == pts[i + 1].first || nl < minSize || nr < minSize) continue;
          const double right = total - left;
          const double score = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr);
          if (score > best.score) best = {f, splitPoint(pts[i].first, pts[i + 1].first), score};
        }
      } else {
        std::fill(totalCounts.begin(), totalCounts.end(), 0.0);
        std::fill(leftCounts.begin(), leftCounts.end(), 0.0);
        for (const auto& pt : pts) totalCounts[static_cast<std::size_t>(pt.second)] += 1.0;
        double sqLeft = 0.0;
        double sqRight = 0.0;
        for (double c : totalCounts) sqRight += c * c;
        for (std::size_t i = 0; i + 1 < n; ++i) {
          const auto c = static_cast<std::size_t>(pts[i].second);
          const double l = leftCounts[c], r = totalCounts[c] - l;
          sqLeft += 2 * l + 1;   // (l+1)^2 - l^2
          sqRight -= 2 * r - 1;  // (r-1)^2 - r^2
          leftCounts[c] += 1.0;
          const std::size_t nl = i + 1, nr = n - nl;
          if (pts[i].first == pts[i + 1].first || nl < minSize || nr < minSize) continue;
          const double score = sqLeft / static_cast<double>(nl) + sqRight / static_cast<double>(nr);
          if (score > best.score) best = {f, splitPoint(pts[i].first, pts[i + 1].first), score};
        }
      }
    }
    return best;
  }

  // Node purity score: sum^2/n (regression) or sum_c count_c^2/n (Gini).
  double nodeScore(const std::vector<std::size_t>& rows) const {
    const double n = static_cast<double>(rows.size());
    if (!model.classification) {
      double s = 0.0;
      for (auto r : rows) s += y[r];
      return s * s / n;
    }
    std::vector<double> c(model.classCount(), 0.0);
    for (auto r : rows) c[static_cast<std::size_t>(y[r])] += 1.0;
    double sq = 0.0;
    for (double v : c) sq += v * v;
    return sq / n;
  }

  int grow(std::vector<std::size_t> rows) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[id].count = rows.size();
    tree.nodes[id].value = leafValue(rows);
    if (rows.size() < 2 * model.minNodeSize) return id;
    Split s = bestSplit(rows, nodeScore(rows));
    if (s.feature < 0) return id;
    std::vector<std::size_t> left, right;
    for (auto r : rows) (x(static_cast<Eigen::Index>(r), s.feature) <= s.threshold ? left : right).push_back(r);
    if (left.size() < model.minNodeSize || right.size() < model.minNodeSize) return id;
    rows.clear();
    rows.shrink_to_fit();
    int l = grow(std::move(left));
    int r = grow(std::move(right));
    tree.nodes[id].feature = s.feature;
    tree.nodes[id].threshold = s.threshold;
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }
};

inline std::vector<double> forestTargets(const ForestModel& m, const Table& t) {
  const Column& c = t.column(m.yName);
  if (!m.classification) return c.numeric();
  const auto& f = c.factor();
  std::vector<double> out(f.codes.size());
  for (std::size_t i = 0; i < f.codes.size(); ++i) {
    auto it = std::find(m.classLabels.begin(), m.classLabels.end(), f.label(i));
    if (it == m.classLabels.end())
      throw DataError("class '" + f.label(i) + "' was not seen when the forest was fitted");
    out[i] = static_cast<double>(it - m.classLabels.begin());
  }
  return out;
}

inline RowMatrix toRowMatrix(const Eigen::MatrixXd& m) { return RowMatrix(m); }

}  // namespace detail

inline ForestModel fitForest(const Table& t, const ModelSpec& spec, const ForestParams& params = {}) {
  spec.validate(t);
  if (params.nTrees < 1) throw DataError("a forest needs at least one tree");
  if (params.minNodeSize < 1) throw DataError("minimum node size must be positive");
  ForestModel m;
  m.yName = spec.yName;
  m.nTrees = params.nTrees;
  m.minNodeSize = params.minNodeSize;
  m.seed = params.seed;
  const Column& yc = t.column(spec.yName);
  m.classification = yc.isFactor();
  if (m.classification) m.classLabels = detail::observedLevels(t, spec.yName);

  m.encoder = DesignEncoder::learn(t, spec.xNames, false);
  DesignMatrix d = m.encoder.encode(t);
  const auto p = static_cast<std::size_t>(d.matrix.cols());
  if (p == 0) throw DataError("a forest needs at least one feature");
  for (const auto& [name, w] : params.splitProbabilities) {
    if (std::find(spec.xNames.begin(), spec.xNames.end(), name) == spec.xNames.end())
      throw DataError("split probability given for unknown feature '" + name + "'");
    if (!(w >= 0.0) || !std::isfinite(w))
      throw DataError("split probability for '" + name + "' must be nonnegative");
  }
  m.columnWeights.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    auto it = params.splitProbabilities.find(d.columns[j].source);
    m.columnWeights[j] = it == params.splitProbabilities.end() ? 1.0 : it->second;
  }
  // zero-weight columns are never tried, so they do not count towards mtry
  const auto usable = static_cast<std::size_t>(
      std::count_if(m.columnWeights.begin(), m.columnWeights.end(), [](double w) { return w > 0.0; }));
  if (usable == 0) throw DataError("every split probability is zero");
  m.mtry = params.mtry ? *params.mtry
                       : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(usable))));
  m.mtry = std::clamp<std::size_t>(m.mtry, 1, usable);

  const RowMatrix x = detail::toRowMatrix(d.matrix);
  const std::vector<double> y = detail::forestTargets(m, t);
  const std::size_t n = t.nrows();
  m.trees.resize(m.nTrees);
  parallelFor(m.nTrees, [&](std::size_t ti) {
    detail::TreeBuilder b{x, y, m, Rng(deriveSeed(m.seed, ti)), {}};
    std::vector<std::size_t> boot(n);
    if (params.bootstrap) {
      for (auto& r : boot) r = b.rng.below(n);
      std::sort(boot.begin(), boot.end());
    } else {
      std::iota(boot.begin(), boot.end(), 0);
    }
    b.grow(std::move(boot));
    m.trees[ti] = std::move(b.tree);
  });
  return m;
}

// Regression: mean over trees. Classification: column c holds the mean leaf
// frequency of class c.
inline Eigen::MatrixXd forestScores(const ForestModel& m, const RowMatrix& x) {
  const auto nc = static_cast<Eigen::Index>(m.classCount());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), nc);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* row = x.data() + i * x.cols();
    for (const auto& tree : m.trees) {
      const auto& leaf = tree.leafFor(row);
      for (Eigen::Index c = 0; c < nc; ++c) out(i, c) += leaf.value[static_cast<std::size_t>(c)];
    }
  }
  return out / static_cast<double>(m.trees.size());
}

// Majority vote over trees (ties to the lower class index).
inline std::vector<std::size_t> forestVotes(const ForestModel& m, const RowMatrix& x) {
  std::vector<std::size_t> out(static_cast<std::size_t>(x.rows()));
  std::vector<std::size_t> votes(m.classCount());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::fill(votes.begin(), votes.end(), 0);
    const double* row = x.data() + i * x.cols();
    for (const auto& tree : m.trees) {
      const auto& v = tree.leafFor(row).value;
      votes[static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin())]++;
    }
    out[static_cast<std::size_t>(i)] =
        static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

// Regression prediction, or the probability of the second class for a
// two-class forest.
inline Eigen::VectorXd predictForest(const ForestModel& m, const Table& rows) {
  RowMatrix x = detail::toRowMatrix(m.encoder.encode(rows).matrix);
  Eigen::MatrixXd s = forestScores(m, x);
  if (!m.classification) return s.col(0);
  if (m.classCount() != 2)
    throw DataError("numeric predictions from a multiclass forest are undefined; use votes");
  return s.col(1);
}

inline std::vector<std::string> predictForestClass(const ForestModel& m, const Table& rows) {
  if (!m.classification) throw DataError("class predictions need a classification forest");
  RowMatrix x = detail::toRowMatrix(m.encoder.encode(rows).matrix);
  std::vector<std::string> out;
  for (auto c : forestVotes(m, x)) out.push_back(m.classLabels[c]);
  return out;
}

// Every feature index used by any split.
inline std::vector<int> splitFeatures(const ForestModel& m) {
  std::vector<int> used;
  for (const auto& t : m.trees)
    for (const auto& n : t.nodes)
      if (n.feature >= 0) used.push_back(n.feature);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  return used;
}

// ---------------------------------------------------------------------------
// Permutation importance

struct ImportanceVector {
  std::vector<std::string> features;
  std::vector<double> scores;
  std::vector<double> standardErrors;
  double baselineLoss = 0.0;
  std::string loss;  // "mse" or "misclassification"

  // Feature names ordered by decreasing score (ties by name).
  std::vector<std::string> ranked() const {
    std::vector<std::size_t> idx(features.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return features[a] < features[b];
    });
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(features[i]);
    return out;
  }

  double score(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
      if (features[i] == name) return scores[i];
    throw DataError("no importance for '" + name + "'");
  }
};

namespace detail {

inline double forestLoss(const ForestModel& m, const RowMatrix& x, const std::vector<double>& y) {
  const double n = static_cast<double>(y.size());
  if (!m.classification) {
    Eigen::MatrixXd s = forestScores(m, x);
    double mse = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double e = s(static_cast<Eigen::Index>(i), 0) - y[i];
      mse += e * e;
    }
    return mse / n;
  }
  auto votes = forestVotes(m, x);
  double wrong = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) wrong += votes[i] != static_cast<std::size_t>(y[i]);
  return wrong / n;
}

}  // namespace detail

// Increase in holdout loss (MSE or misclassification) when one covariate's
// values are permuted across rows, averaged over repeats.
inline ImportanceVector permutationImportance(const ForestModel& m, const Table& holdout,
                                              std::size_t nRepeats = 5, std::uint64_t seed = 1) {
  if (holdout.nrows() == 0) throw DataError("importance needs a nonempty holdout set");
  if (nRepeats == 0) nRepeats = 1;
  DesignMatrix d = m.encoder.encode(holdout);
  const RowMatrix base = detail::toRowMatrix(d.matrix);
  const std::vector<double> y = detail::forestTargets(m, holdout);
  ImportanceVector out;
  out.loss = m.classification ? "misclassification" : "mse";
  out.baselineLoss = detail::forestLoss(m, base, y);
  const auto& terms = m.encoder.terms();
  out.features.resize(terms.size());
  out.scores.resize(terms.size());
  out.standardErrors.resize(terms.size());
  const std::size_t n = holdout.nrows();
  parallelFor(terms.size(), [&](std::size_t f) {
    auto cols = d.columnsOf(terms[f].name);
    std::vector<double> diffs;
    RowMatrix x = base;
    for (std::size_t r = 0; r < nRepeats; ++r) {
      Rng rng(deriveSeed(seed, f * 100003 + r));
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      for (auto c : cols)
        for (std::size_t i = 0; i < n; ++i)
          x(static_cast<Eigen::Index>(i), c) = base(static_cast<Eigen::Index>(perm[i]), c);
      diffs.push_back(detail::forestLoss(m, x, y) - out.baselineLoss);
    }
    for (auto c : cols) x.col(c) = base.col(c);
    out.features[f] = terms[f].name;
    out.scores[f] = stats::mean(diffs);
    out.standardErrors[f] =
        diffs.size() > 1 ? stats::sd(diffs) / std::sqrt(static_cast<double>(diffs.size())) : 0.0;
  });
  return out;
}

}  // namespace fairscope
