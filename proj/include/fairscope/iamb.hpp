#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fairscope/error.hpp"
#include "fairscope/parallel.hpp"
#include "fairscope/stats.hpp"
#include "fairscope/table.hpp"

namespace fairscope {

// Two-sided p-value of the Fisher z test for a (partial) correlation.
inline double fisherZTest(double r, std::size_t n, std::size_t conditioningSize) {
  if (!(std::fabs(r) < 1.0)) throw DataError("correlation must be strictly inside (-1, 1)");
  const double df = static_cast<double>(n) - static_cast<double>(conditioningSize) - 3.0;
  if (!(df > 0.0)) throw DataError("too few rows for a Fisher z test with this conditioning set");
  return stats::normalTwoSidedP(std::sqrt(df) * std::atanh(r));
}

// Partial correlation of variables i and j given `cond`, from the inverse of
// the correlation submatrix over {i, j} + cond.
inline double partialCorrelation(const Eigen::MatrixXd& corr, std::size_t i, std::size_t j,
                                 const std::vector<std::size_t>& cond) {
  std::vector<std::size_t> idx{i, j};
  idx.insert(idx.end(), cond.begin(), cond.end());
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd sub(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b)
      sub(a, b) = corr(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(a)]),
                       static_cast<Eigen::Index>(idx[static_cast<std::size_t>(b)]));
  if (cond.empty()) return sub(0, 1);
  Eigen::MatrixXd prec = sub.ldlt().solve(Eigen::MatrixXd::Identity(m, m));
  const double r = -prec(0, 1) / std::sqrt(prec(0, 0) * prec(1, 1));
  return std::clamp(r, -1.0 + 1e-15, 1.0 - 1e-15);
}

struct CausalGraph {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> directedEdges;    // from, to
  std::vector<std::pair<std::string, std::string>> undirectedEdges;  // a < b
  double alpha = 0.05;
  std::map<std::string, std::vector<std::string>> blankets;

  bool hasDirected(const std::string& a, const std::string& b) const {
    return std::find(directedEdges.begin(), directedEdges.end(), std::make_pair(a, b)) != directedEdges.end();
  }
  bool hasUndirected(const std::string& a, const std::string& b) const {
    auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    return std::find(undirectedEdges.begin(), undirectedEdges.end(), key) != undirectedEdges.end();
  }
  bool adjacent(const std::string& a, const std::string& b) const {
    return hasDirected(a, b) || hasDirected(b, a) || hasUndirected(a, b);
  }
};

inline std::string toDot(const CausalGraph& g) {
  auto q = [](const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  };
  std::string s = "digraph iamb {\n";
  for (const auto& n : g.nodes) s += "  " + q(n) + ";\n";
  for (const auto& [a, b] : g.directedEdges) s += "  " + q(a) + " -> " + q(b) + ";\n";
  for (const auto& [a, b] : g.undirectedEdges) s += "  " + q(a) + " -- " + q(b) + " [dir=none];\n";
  s += "}\n";
  return s;
}

namespace detail {

struct IambState {
  const Eigen::MatrixXd& corr;
  std::size_t n;
  double alpha;

  double pValue(std::size_t a, std::size_t b, const std::vector<std::size_t>& cond) const {
    return fisherZTest(partialCorrelation(corr, a, b, cond), n, cond.size());
  }

  bool independent(std::size_t a, std::size_t b, const std::vector<std::size_t>& cond) const {
    return pValue(a, b, cond) >= alpha;
  }

  std::vector<std::size_t> blanket(std::size_t target, std::size_t p) const {
    std::vector<std::size_t> mb;
    // grow
    for (;;) {
      double bestAbs = -1.0;
      std::size_t best = p;
      for (std::size_t v = 0; v < p; ++v) {
        if (v == target || std::find(mb.begin(), mb.end(), v) != mb.end()) continue;
        if (n <= mb.size() + 3) break;
        const double r = std::fabs(partialCorrelation(corr, target, v, mb));
        if (r > bestAbs) {
          bestAbs = r;
          best = v;
        }
      }
      if (best == p || independent(target, best, mb)) break;
      mb.push_back(best);
    }
    // shrink
    for (bool changed = true; changed;) {
      changed = false;
      for (std::size_t q = 0; q < mb.size(); ++q) {
        std::vector<std::size_t> rest = mb;
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(q));
        if (independent(target, mb[q], rest)) {
          mb = std::move(rest);
          changed = true;
          break;
        }
      }
    }
    std::sort(mb.begin(), mb.end());
    return mb;
  }
};

// Subsets of `pool` in order of increasing size, up to maxSize elements.
template <typename F>
bool anySubset(const std::vector<std::size_t>& pool, std::size_t maxSize, F&& f) {
  const std::size_t m = pool.size();
  for (std::size_t size = 0; size <= std::min(maxSize, m); ++size) {
    std::vector<bool> pick(m, false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(size), true);
    do {
      std::vector<std::size_t> subset;
      for (std::size_t i = 0; i < m; ++i)
        if (pick[i]) subset.push_back(pool[i]);
      if (f(subset)) return true;
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  return false;
}

inline constexpr std::size_t kMaxSepsetSize = 4;

// Directed reachability a ~> b over the oriented edges.
inline bool reaches(const std::vector<std::vector<int>>& dir, std::size_t a, std::size_t b) {
  std::vector<bool> seen(dir.size(), false);
  std::vector<std::size_t> stack{a};
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    if (u == b) return true;
    if (seen[u]) continue;
    seen[u] = true;
    for (std::size_t v = 0; v < dir.size(); ++v)
      if (dir[u][v] == 1) stack.push_back(v);
  }
  return false;
}

}  // namespace detail

// Markov blankets by incremental association (grow/shrink with Fisher z
// tests), symmetry-corrected, then a skeleton with spouse links removed,
// v-structures and Meek rule 1. Variables are processed in name order so
// the graph does not depend on column order.
inline CausalGraph iamb(const Table& t, double alpha = 0.05) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("alpha must be in (0, 1)");
  std::vector<std::string> names = t.names();
  std::sort(names.begin(), names.end());
  const std::size_t p = names.size();
  const std::size_t n = t.nrows();
  if (p < 2) throw DataError("structure learning needs at least two columns");
  for (const auto& nm : names)
    if (!t.column(nm).isNumeric()) throw DataError("column '" + nm + "' is not numeric");
  if (n <= p + 3)
    throw DataError("need more rows than columns + 3 (" + std::to_string(n) + " rows, " + std::to_string(p) +
                    " columns)");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) {
    const auto& v = t.column(names[j]).numeric();
    for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i];
  }
  Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(n - 1);
  Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  for (std::size_t j = 0; j < p; ++j)
    if (!(sd[static_cast<Eigen::Index>(j)] > 0.0))
      throw DataError("column '" + names[j] + "' is constant; the correlation matrix is singular");
  Eigen::MatrixXd corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < 1e-10) {
      // name the first column that is a combination of the earlier ones
      std::string culprit = names.back();
      for (std::size_t j = 2; j <= p; ++j) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sub(corr.topLeftCorner(j, j), Eigen::EigenvaluesOnly);
        if (sub.eigenvalues().minCoeff() < 1e-10) {
          culprit = names[j - 1];
          break;
        }
      }
      throw DataError("correlation matrix is singular: column '" + culprit + "' is collinear with others");
    }
  }

  detail::IambState st{corr, n, alpha};
  std::vector<std::vector<std::size_t>> mb(p);
  parallelFor(p, [&](std::size_t v) { mb[v] = st.blanket(v, p); });

  auto inMb = [&](std::size_t a, std::size_t b) {
    return std::binary_search(mb[a].begin(), mb[a].end(), b);
  };
  std::vector<std::vector<std::size_t>> sym(p);
  for (std::size_t a = 0; a < p; ++a)
    for (auto b : mb[a])
      if (inMb(b, a)) sym[a].push_back(b);

  // skeleton; a blanket pair is not adjacent if some subset of either
  // blanket separates it (spouses)
  std::vector<std::vector<bool>> adj(p, std::vector<bool>(p, false));
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> sepset;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < p; ++a)
    for (auto b : sym[a])
      if (a < b) pairs.emplace_back(a, b);
  std::vector<int> separated(pairs.size(), 0);
  std::vector<std::vector<std::size_t>> found(pairs.size());
  parallelFor(pairs.size(), [&](std::size_t q) {
    auto [a, b] = pairs[q];
    for (const auto* base : {&sym[a], &sym[b]}) {
      std::vector<std::size_t> pool;
      for (auto v : *base)
        if (v != a && v != b) pool.push_back(v);
      bool hit = detail::anySubset(pool, detail::kMaxSepsetSize, [&](const std::vector<std::size_t>& s) {
        if (st.independent(a, b, s)) {
          found[q] = s;
          return true;
        }
        return false;
      });
      if (hit) {
        separated[q] = 1;
        return;
      }
    }
  });
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    auto [a, b] = pairs[q];
    if (separated[q])
      sepset[{a, b}] = found[q];
    else
      adj[a][b] = adj[b][a] = true;
  }
  // non-blanket pairs are separated by the blanket itself
  auto sepOf = [&](std::size_t a, std::size_t b) -> std::vector<std::size_t> {
    auto key = std::make_pair(std::min(a, b), std::max(a, b));
    if (auto it = sepset.find(key); it != sepset.end()) return it->second;
    if (!inMb(a, b)) return mb[a];
    return mb[b];
  };

  // orientation: dir[u][v] == 1 means u -> v
  std::vector<std::vector<int>> dir(p, std::vector<int>(p, 0));
  std::vector<std::vector<bool>> conflict(p, std::vector<bool>(p, false));
  for (std::size_t c = 0; c < p; ++c)
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = a + 1; b < p; ++b) {
        if (!adj[a][c] || !adj[b][c] || adj[a][b] || a == c || b == c) continue;
        auto s = sepOf(a, b);
        if (std::find(s.begin(), s.end(), c) != s.end()) continue;
        for (auto u : {a, b}) {
          if (dir[c][u] == 1 || conflict[u][c]) {
            dir[c][u] = 0;
            conflict[u][c] = conflict[c][u] = true;
          } else {
            dir[u][c] = 1;
          }
        }
      }
  // conflicting pairs stay undirected
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b)
      if (conflict[a][b]) dir[a][b] = 0;

  // Meek rule 1: a -> b, b - c, a and c not adjacent => b -> c
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b) {
        if (dir[a][b] != 1) continue;
        for (std::size_t c = 0; c < p; ++c) {
          if (c == a || !adj[b][c] || adj[a][c] || dir[b][c] || dir[c][b] || conflict[b][c]) continue;
          if (detail::reaches(dir, c, b)) continue;  // would close a cycle
          dir[b][c] = 1;
          changed = true;
        }
      }
  }
  // drop orientations that still sit on a directed cycle
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b)
      if (dir[a][b] == 1 && detail::reaches(dir, b, a)) dir[a][b] = 0;

  CausalGraph g;
  g.nodes = names;
  g.alpha = alpha;
  for (std::size_t a = 0; a < p; ++a) {
    auto& bl = g.blankets[names[a]];
    for (auto b : mb[a]) bl.push_back(names[b]);
    for (std::size_t b = 0; b < p; ++b) {
      if (!adj[a][b]) continue;
      if (dir[a][b] == 1)
        g.directedEdges.emplace_back(names[a], names[b]);
      else if (a < b && dir[b][a] != 1)
        g.undirectedEdges.emplace_back(names[a], names[b]);
    }
  }
  return g;
}

// Integer-like factor codes become reals so mixed tables can be analysed.
inline Table numericView(const Table& t) {
  std::vector<Column> cols;
  for (const auto& c : t.columns()) {
    if (c.isNumeric()) {
      cols.push_back(c);
      continue;
    }
    const auto& f = c.factor();
    NumericData v(f.codes.begin(), f.codes.end());
    cols.emplace_back(c.name(), std::move(v));
  }
  return Table(t.name(), std::move(cols));
}

}  // namespace fairscope
