#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairscope/error.hpp"
#include "fairscope/rng.hpp"
#include "fairscope/stats.hpp"
#include "fairscope/table.hpp"

namespace fairscope {

// Roles of the table columns in one analysis: response Y, optional sensitive
// variable S, and covariates X.
struct ModelSpec {
  std::string yName;
  std::optional<std::string> sName;
  std::vector<std::string> xNames;

  // X = every column other than Y and S, in table order.
  static ModelSpec fromTable(const Table& t, std::string y, std::optional<std::string> s = {}) {
    ModelSpec spec{std::move(y), std::move(s), {}};
    for (const auto& c : t.columns())
      if (c.name() != spec.yName && (!spec.sName || c.name() != *spec.sName))
        spec.xNames.push_back(c.name());
    spec.validate(t);
    return spec;
  }

  void validate(const Table& t) const {
    if (!t.has(yName)) throw DataError("response column '" + yName + "' not found");
    if (sName) {
      if (*sName == yName) throw DataError("response and sensitive variable must differ");
      if (!t.has(*sName)) throw DataError("sensitive column '" + *sName + "' not found");
    }
    for (const auto& x : xNames) {
      if (x == yName) throw DataError("response '" + yName + "' listed as a covariate");
      if (sName && x == *sName)
        throw DataError("sensitive variable '" + x + "' listed as a covariate");
      if (!t.has(x)) throw DataError("covariate '" + x + "' not found");
    }
  }

  const std::string& s() const {
    if (!sName) throw DataError("no sensitive variable given");
    return *sName;
  }
};

struct DesignColumn {
  std::string source;                // "" for the intercept
  std::optional<std::string> level;  // set for dummy columns

  std::string name() const {
    if (source.empty()) return "(Intercept)";
    return level ? source + *level : source;
  }
};

struct DesignMatrix {
  Eigen::MatrixXd matrix;
  std::vector<DesignColumn> columns;
  bool interceptIncluded = false;

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : columns) out.push_back(c.name());
    return out;
  }

  // Indices of design columns generated from a source column.
  std::vector<Eigen::Index> columnsOf(const std::string& source) const {
    std::vector<Eigen::Index> out;
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].source == source) out.push_back(static_cast<Eigen::Index>(j));
    return out;
  }
};

// Encoding schema learned from training data; reused to encode new rows.
// Factors use the levels observed in training; the lexicographically first
// observed level is the reference and gets no dummy.
class DesignEncoder {
 public:
  struct Term {
    std::string name;
    bool numeric = true;
    std::vector<std::string> levels;  // observed levels, sorted; [0] is the reference
  };

  DesignEncoder() = default;

  static DesignEncoder learn(const Table& t, std::span<const std::string> features,
                             bool intercept) {
    DesignEncoder enc;
    enc.intercept_ = intercept;
    for (const auto& f : features) {
      const Column& c = t.column(f);
      Term term;
      term.name = f;
      if (c.isFactor()) {
        term.numeric = false;
        const auto& fd = c.factor();
        auto counts = fd.counts();
        for (std::size_t l = 0; l < fd.levels.size(); ++l)
          if (counts[l] > 0) term.levels.push_back(fd.levels[l]);
        std::sort(term.levels.begin(), term.levels.end());
        if (term.levels.size() < 2)
          throw DataError("factor '" + f + "' has a single level and cannot be encoded");
      }
      enc.terms_.push_back(std::move(term));
    }
    return enc;
  }

  static DesignEncoder fromTerms(bool intercept, std::vector<Term> terms) {
    DesignEncoder enc;
    enc.intercept_ = intercept;
    enc.terms_ = std::move(terms);
    return enc;
  }

  bool intercept() const { return intercept_; }
  const std::vector<Term>& terms() const { return terms_; }

  std::vector<DesignColumn> columns() const {
    std::vector<DesignColumn> cols;
    if (intercept_) cols.push_back({"", std::nullopt});
    for (const auto& t : terms_) {
      if (t.numeric)
        cols.push_back({t.name, std::nullopt});
      else
        for (std::size_t l = 1; l < t.levels.size(); ++l) cols.push_back({t.name, t.levels[l]});
    }
    return cols;
  }

  std::size_t width() const { return columns().size(); }

  DesignMatrix encode(const Table& t) const {
    DesignMatrix d;
    d.columns = columns();
    d.interceptIncluded = intercept_;
    const auto n = static_cast<Eigen::Index>(t.nrows());
    d.matrix = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(d.columns.size()));
    Eigen::Index j = 0;
    if (intercept_) d.matrix.col(j++).setOnes();
    for (const auto& term : terms_) {
      const Column& c = t.column(term.name);
      if (term.numeric) {
        const auto& v = c.numeric();
        for (Eigen::Index i = 0; i < n; ++i) d.matrix(i, j) = v[i];
        ++j;
        continue;
      }
      const auto& fd = c.factor();
      // map this table's level codes onto training level positions
      std::vector<int> pos(fd.levels.size(), -1);
      for (std::size_t l = 0; l < fd.levels.size(); ++l) {
        auto it = std::find(term.levels.begin(), term.levels.end(), fd.levels[l]);
        if (it != term.levels.end()) pos[l] = static_cast<int>(it - term.levels.begin());
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        int p = pos[fd.codes[i]];
        if (p < 0)
          throw DataError("level '" + fd.levels[fd.codes[i]] + "' of factor '" + term.name +
                          "' was not seen when the model was fitted");
        if (p > 0) d.matrix(i, j + p - 1) = 1.0;
      }
      j += static_cast<Eigen::Index>(term.levels.size()) - 1;
    }
    return d;
  }

 private:
  bool intercept_ = true;
  std::vector<Term> terms_;
};

// Numeric response; a two-level factor is coded 0/1 with the
// lexicographically second level as 1.
struct Response {
  Eigen::VectorXd values;
  bool binary = false;
  std::optional<std::string> positiveLevel;
};

inline Response encodeResponse(const Table& t, const std::string& yName) {
  const Column& c = t.column(yName);
  Response r;
  const auto n = static_cast<Eigen::Index>(t.nrows());
  r.values.resize(n);
  if (c.isNumeric()) {
    const auto& v = c.numeric();
    for (Eigen::Index i = 0; i < n; ++i) r.values[i] = v[i];
    r.binary = std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0 || x == 1.0; });
    return r;
  }
  const auto& f = c.factor();
  std::vector<std::string> observed;
  auto counts = f.counts();
  for (std::size_t l = 0; l < f.levels.size(); ++l)
    if (counts[l] > 0) observed.push_back(f.levels[l]);
  std::sort(observed.begin(), observed.end());
  if (observed.size() < 2)
    throw DataError("response factor '" + yName + "' has a single level");
  if (observed.size() > 2)
    throw DataError("response factor '" + yName + "' has more than two levels");
  r.binary = true;
  r.positiveLevel = observed[1];
  for (Eigen::Index i = 0; i < n; ++i) r.values[i] = f.label(i) == observed[1] ? 1.0 : 0.0;
  return r;
}

struct Design {
  DesignMatrix x;
  Response y;
  DesignEncoder encoder;
};

// Intercept first, then X in spec order, then S (as dummies) when includeS.
inline Design buildDesign(const Table& t, const ModelSpec& spec, bool includeS,
                          bool intercept = true) {
  spec.validate(t);
  std::vector<std::string> features = spec.xNames;
  if (includeS) features.push_back(spec.s());
  Design d;
  d.encoder = DesignEncoder::learn(t, features, intercept);
  d.x = d.encoder.encode(t);
  d.y = encodeResponse(t, spec.yName);
  return d;
}

struct Standardized {
  std::vector<double> values;
  double mean = 0.0;
  double sd = 1.0;
};

inline Standardized standardize(std::span<const double> x) {
  if (x.size() < 2) throw DataError("cannot standardize fewer than two values");
  Standardized s;
  s.mean = stats::mean(x);
  s.sd = stats::sd(x);
  if (!(s.sd > 0.0)) throw DataError("cannot standardize a constant column");
  s.values.reserve(x.size());
  for (double v : x) s.values.push_back((v - s.mean) / s.sd);
  return s;
}

struct HoldoutSplit {
  std::vector<std::size_t> trainIndices;    // sorted
  std::vector<std::size_t> holdoutIndices;  // sorted
  std::uint64_t seed = 0;
};

inline std::size_t defaultHoldoutSize(std::size_t nrows) {
  return static_cast<std::size_t>(std::floor(std::min(1000.0, 0.1 * static_cast<double>(nrows))));
}

// Uniform sample without replacement. Size is floor(min(1000, 0.1 n)) unless
// a fraction is given, in which case it is floor(fraction * n).
inline HoldoutSplit makeHoldout(std::size_t nrows, std::uint64_t seed,
                                std::optional<double> fraction = std::nullopt) {
  if (nrows < 10) throw DataError("holdout needs at least 10 rows");
  std::size_t size = fraction ? static_cast<std::size_t>(
                                    std::floor(*fraction * static_cast<double>(nrows)))
                              : defaultHoldoutSize(nrows);
  if (size == 0 || size >= nrows)
    throw DataError("holdout size " + std::to_string(size) + " is invalid for " +
                    std::to_string(nrows) + " rows");
  std::vector<std::size_t> perm(nrows);
  for (std::size_t i = 0; i < nrows; ++i) perm[i] = i;
  Rng rng(seed);
  // partial Fisher-Yates: the first `size` slots are the sample
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t j = i + rng.below(nrows - i);
    std::swap(perm[i], perm[j]);
  }
  HoldoutSplit split;
  split.seed = seed;
  split.holdoutIndices.assign(perm.begin(), perm.begin() + size);
  split.trainIndices.assign(perm.begin() + size, perm.end());
  std::sort(split.holdoutIndices.begin(), split.holdoutIndices.end());
  std::sort(split.trainIndices.begin(), split.trainIndices.end());
  return split;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline std::vector<std::string> observedLevels(const Table& t, const std::string& name) {
  const auto& f = t.column(name).factor();
  auto counts = f.counts();
  std::vector<std::string> out;
  for (std::size_t l = 0; l < f.levels.size(); ++l)
    if (counts[l] > 0) out.push_back(f.levels[l]);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::size_t> rowsWithLevel(const Table& t, const std::string& name,
                                              const std::string& level) {
  const auto& f = t.column(name).factor();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < f.codes.size(); ++i)
    if (f.label(i) == level) rows.push_back(i);
  return rows;
}

}  // namespace detail

inline std::vector<double> toStd(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace fairscope
