#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "fairscope/error.hpp"

namespace fairscope {

using NumericData = std::vector<double>;

// Level index per row plus the ordered level labels.
struct FactorData {
  std::vector<std::int32_t> codes;
  std::vector<std::string> levels;

  // Builds a factor whose levels are the sorted distinct labels.
  static FactorData fromLabels(std::span<const std::string> labels) {
    std::set<std::string> distinct(labels.begin(), labels.end());
    FactorData f;
    f.levels.assign(distinct.begin(), distinct.end());
    std::unordered_map<std::string, std::int32_t> index;
    for (std::size_t i = 0; i < f.levels.size(); ++i)
      index.emplace(f.levels[i], static_cast<std::int32_t>(i));
    f.codes.reserve(labels.size());
    for (const auto& l : labels) f.codes.push_back(index.at(l));
    return f;
  }

  const std::string& label(std::size_t row) const { return levels[codes[row]]; }

  std::optional<std::int32_t> code(std::string_view label) const {
    auto it = std::find(levels.begin(), levels.end(), label);
    if (it == levels.end()) return std::nullopt;
    return static_cast<std::int32_t>(it - levels.begin());
  }

  // Per-level row counts.
  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> c(levels.size(), 0);
    for (auto k : codes) ++c[k];
    return c;
  }
};

class Column {
 public:
  Column(std::string name, NumericData values)
      : name_(std::move(name)), data_(std::move(values)) {}

  Column(std::string name, FactorData factor) : name_(std::move(name)), data_(std::move(factor)) {
    const auto& f = std::get<FactorData>(data_);
    for (auto c : f.codes)
      if (c < 0 || static_cast<std::size_t>(c) >= f.levels.size())
        throw DataError("factor '" + name_ + "' has a code outside its level list");
  }

  static Column factor(std::string name, std::span<const std::string> labels) {
    return Column(std::move(name), FactorData::fromLabels(labels));
  }

  const std::string& name() const { return name_; }
  bool isNumeric() const { return std::holds_alternative<NumericData>(data_); }
  bool isFactor() const { return std::holds_alternative<FactorData>(data_); }

  const NumericData& numeric() const {
    if (!isNumeric()) throw DataError("column '" + name_ + "' is not numeric");
    return std::get<NumericData>(data_);
  }

  const FactorData& factor() const {
    if (!isFactor()) throw DataError("column '" + name_ + "' is not a factor");
    return std::get<FactorData>(data_);
  }

  std::size_t size() const {
    return isNumeric() ? numeric().size() : factor().codes.size();
  }

  Column renamed(std::string name) const {
    Column c = *this;
    c.name_ = std::move(name);
    return c;
  }

  // Row subset; factor level lists are kept even if a level becomes empty.
  Column subset(std::span<const std::size_t> rows) const {
    if (isNumeric()) {
      const auto& v = numeric();
      NumericData out;
      out.reserve(rows.size());
      for (auto r : rows) out.push_back(v.at(r));
      return Column(name_, std::move(out));
    }
    const auto& f = factor();
    FactorData out;
    out.levels = f.levels;
    out.codes.reserve(rows.size());
    for (auto r : rows) out.codes.push_back(f.codes.at(r));
    return Column(name_, std::move(out));
  }

  std::string cellText(std::size_t row) const;

 private:
  std::string name_;
  std::variant<NumericData, FactorData> data_;
};

// Shortest text that round-trips to the same double.
inline std::string formatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string Column::cellText(std::size_t row) const {
  if (isNumeric()) return formatDouble(numeric().at(row));
  return factor().label(row);
}

class Table {
 public:
  Table() = default;

  Table(std::string name, std::vector<Column> columns)
      : name_(std::move(name)), columns_(std::move(columns)) {
    nrows_ = columns_.empty() ? 0 : columns_.front().size();
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      const auto& c = columns_[i];
      if (c.name().empty()) throw DataError("column names must be non-empty");
      if (c.size() != nrows_)
        throw DataError("column '" + c.name() + "' has " + std::to_string(c.size()) +
                        " rows, expected " + std::to_string(nrows_));
      if (!index_.emplace(c.name(), i).second)
        throw DataError("duplicate column name '" + c.name() + "'");
    }
  }

  const std::string& name() const { return name_; }
  std::size_t nrows() const { return nrows_; }
  std::size_t ncols() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const Column& column(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("no column named '" + name + "'");
    return columns_[it->second];
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : columns_) out.push_back(c.name());
    return out;
  }

  Table rows(std::span<const std::size_t> idx) const {
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& c : columns_) cols.push_back(c.subset(idx));
    Table t(name_, std::move(cols));
    if (t.columns_.empty()) t.nrows_ = idx.size();
    return t;
  }

  Table row(std::size_t i) const {
    std::size_t idx[] = {i};
    return rows(idx);
  }

  Table select(std::span<const std::string> keep) const {
    std::vector<Column> cols;
    for (const auto& n : keep) cols.push_back(column(n));
    return Table(name_, std::move(cols));
  }

  Table without(std::span<const std::string> drop) const {
    std::vector<Column> cols;
    for (const auto& c : columns_)
      if (std::find(drop.begin(), drop.end(), c.name()) == drop.end()) cols.push_back(c);
    return Table(name_, std::move(cols));
  }

  Table withColumn(Column c) const {
    std::vector<Column> cols = columns_;
    auto it = index_.find(c.name());
    if (it != index_.end())
      cols[it->second] = std::move(c);
    else
      cols.push_back(std::move(c));
    return Table(name_, std::move(cols));
  }

 private:
  std::string name_;
  std::vector<Column> columns_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t nrows_ = 0;
};

// ---------------------------------------------------------------------------
// CSV

struct LoadResult {
  Table table;
  std::size_t droppedRows = 0;
};

namespace detail {

// RFC 4180 records: comma separated, double-quote escaping, quoted newlines.
inline std::vector<std::vector<std::string>> parseCsvRecords(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool inQuotes = false;
  bool fieldStarted = false;
  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;

  auto endRecord = [&] {
    record.push_back(std::move(field));
    field.clear();
    // A blank line is not a record.
    if (!(record.size() == 1 && record[0].empty() && !fieldStarted)) records.push_back(record);
    record.clear();
    fieldStarted = false;
  };

  for (; i < text.size(); ++i) {
    char c = text[i];
    if (inQuotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          inQuotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        inQuotes = true;
        fieldStarted = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        fieldStarted = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        endRecord();
        break;
      case '\n':
        endRecord();
        break;
      default:
        field.push_back(c);
        fieldStarted = true;
    }
  }
  if (inQuotes) throw DataError("unterminated quoted field in CSV");
  if (fieldStarted || !field.empty() || !record.empty()) endRecord();
  return records;
}

inline bool isMissingCell(std::string_view s) { return s.empty() || s == "NA"; }

// Integer, decimal, or scientific notation; nothing else counts as numeric.
inline std::optional<double> parseNumber(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string_view body = s;
  if (body.front() == '+') body.remove_prefix(1);
  if (body.empty()) return std::nullopt;
  char c0 = body.front() == '-' && body.size() > 1 ? body[1] : body.front();
  if (!(std::isdigit(static_cast<unsigned char>(c0)) || c0 == '.')) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(body.data(), body.data() + body.size(), v,
                             std::chars_format::general);
  if (res.ec != std::errc() || res.ptr != body.data() + body.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

inline std::string quoteCsv(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos && !s.empty()) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

inline LoadResult parseCsv(std::string_view text, std::string name = "data") {
  auto records = detail::parseCsvRecords(text);
  if (records.empty()) throw DataError("CSV has no header row");
  const auto header = records.front();
  {
    std::set<std::string> seen;
    for (const auto& h : header) {
      if (h.empty()) throw DataError("CSV header contains an empty column name");
      if (!seen.insert(h).second) throw DataError("CSV header repeats column '" + h + "'");
    }
  }
  const std::size_t ncol = header.size();
  std::vector<std::size_t> kept;
  std::size_t dropped = 0;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != ncol)
      throw DataError("ragged CSV: record " + std::to_string(r + 1) + " has " +
                      std::to_string(rec.size()) + " fields, header has " +
                      std::to_string(ncol));
    bool missing = std::any_of(rec.begin(), rec.end(),
                               [](const std::string& s) { return detail::isMissingCell(s); });
    if (missing)
      ++dropped;
    else
      kept.push_back(r);
  }
  if (kept.empty()) throw DataError("CSV has zero data rows after dropping missing values");

  std::vector<Column> cols;
  cols.reserve(ncol);
  for (std::size_t c = 0; c < ncol; ++c) {
    NumericData values;
    values.reserve(kept.size());
    bool numeric = true;
    for (auto r : kept) {
      auto v = detail::parseNumber(records[r][c]);
      if (!v) {
        numeric = false;
        break;
      }
      values.push_back(*v);
    }
    if (numeric) {
      cols.emplace_back(header[c], std::move(values));
    } else {
      std::vector<std::string> labels;
      labels.reserve(kept.size());
      for (auto r : kept) labels.push_back(records[r][c]);
      cols.push_back(Column::factor(header[c], labels));
    }
  }
  return LoadResult{Table(std::move(name), std::move(cols)), dropped};
}

inline LoadResult loadCsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string stem = path;
  if (auto slash = stem.find_last_of('/'); slash != std::string::npos) stem = stem.substr(slash + 1);
  if (auto dot = stem.find_last_of('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  return parseCsv(ss.str(), stem);
}

inline void writeCsv(const Table& t, std::ostream& out) {
  const auto& cols = t.columns();
  for (std::size_t c = 0; c < cols.size(); ++c)
    out << (c ? "," : "") << detail::quoteCsv(cols[c].name());
  out << '\n';
  for (std::size_t r = 0; r < t.nrows(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c)
      out << (c ? "," : "") << detail::quoteCsv(cols[c].cellText(r));
    out << '\n';
  }
}

}  // namespace fairscope
