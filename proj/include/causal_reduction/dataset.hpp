/*
 * Copyright 2026 The causal-reduce Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "causal_reduction/errors.hpp"

namespace causal_reduction {

enum class Regime { Observational, Interventional };
enum class Split { Train, Validation, Test };

inline const char* to_string(Regime r) { return r == Regime::Observational ? "observational" : "interventional"; }

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Validation:
      return "validation";
    default:
      return "test";
  }
}

inline Regime parse_regime(std::string_view s) {
  if (s == "observational" || s == "obs") return Regime::Observational;
  if (s == "interventional" || s == "int") return Regime::Interventional;
  throw DataError("unknown regime '" + std::string(s) + "'");
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "validation" || s == "val") return Split::Validation;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

/// Formats a double with 17 significant digits (round-trips exactly).
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RegimeRow {
  Regime regime = Regime::Observational;
  double x = 0.0;
  double y = 0.0;
  std::vector<double> c;  // observed confounders, length L
  Split split = Split::Train;
};

/// Column-major view of one (regime, split) slice.
struct RegimeSamples {
  Eigen::RowVectorXd x, y;
  Eigen::MatrixXd c;  // L x n

  Eigen::Index size() const { return x.size(); }
  Eigen::Index confounders() const { return c.rows(); }
};

/// Tagged samples from both regimes. Interventional rows carry the assigned x.
class RegimeDataset {
 public:
  explicit RegimeDataset(std::size_t confounders = 0) : confounders_(confounders) {}

  std::size_t confounders() const { return confounders_; }
  const std::vector<RegimeRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  void add(RegimeRow row) {
    if (row.c.size() != confounders_) throw DataError("row has the wrong number of confounder values");
    if (!std::isfinite(row.x) || !std::isfinite(row.y)) throw DataError("non-finite x or y");
    for (double v : row.c)
      if (!std::isfinite(v)) throw DataError("non-finite confounder value");
    rows_.push_back(std::move(row));
  }

  std::size_t count(Regime r, Split s) const {
    std::size_t n = 0;
    for (const auto& row : rows_) n += row.regime == r && row.split == s;
    return n;
  }

  /// First `limit` rows (in file order) of the given slice.
  RegimeSamples select(Regime r, Split s, std::size_t limit = std::numeric_limits<std::size_t>::max()) const {
    const std::size_t n = std::min(count(r, s), limit);
    RegimeSamples out{Eigen::RowVectorXd(n), Eigen::RowVectorXd(n),
                      Eigen::MatrixXd(static_cast<Eigen::Index>(confounders_), static_cast<Eigen::Index>(n))};
    Eigen::Index k = 0;
    for (const auto& row : rows_) {
      if (k == static_cast<Eigen::Index>(n)) break;
      if (row.regime != r || row.split != s) continue;
      out.x[k] = row.x;
      out.y[k] = row.y;
      for (std::size_t j = 0; j < confounders_; ++j) out.c(static_cast<Eigen::Index>(j), k) = row.c[j];
      ++k;
    }
    return out;
  }

 private:
  std::size_t confounders_;
  std::vector<RegimeRow> rows_;
};

/// Header: regime,x,y,c1..cL,split.
inline void write_csv(const RegimeDataset& d, std::ostream& os) {
  os << "regime,x,y";
  for (std::size_t j = 0; j < d.confounders(); ++j) os << ",c" << j + 1;
  os << ",split\n";
  for (const auto& row : d.rows()) {
    os << to_string(row.regime) << ',' << format_double(row.x) << ',' << format_double(row.y);
    for (double v : row.c) os << ',' << format_double(v);
    os << ',' << to_string(row.split) << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = 0;
    while (start < cell.size() && cell[start] == ' ') ++start;
    out.push_back(cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, std::size_t line) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (s.empty() || end != begin + s.size())
    throw DataError("line " + std::to_string(line) + ": cannot parse number '" + s + "'");
  return v;
}

}  // namespace detail

/// Reads the CSV written by write_csv. The split column is optional (rows
/// default to train); confounder columns are any columns named c<k>.
inline RegimeDataset read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty dataset file");
  const auto header = detail::split_csv_line(line);
  int col_regime = -1, col_x = -1, col_y = -1, col_split = -1;
  std::vector<int> col_c;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string& h = header[i];
    const int idx = static_cast<int>(i);
    if (h == "regime") col_regime = idx;
    else if (h == "x") col_x = idx;
    else if (h == "y") col_y = idx;
    else if (h == "split") col_split = idx;
    else if (h.size() > 1 && h[0] == 'c') col_c.push_back(idx);
    else throw DataError("unknown column '" + h + "'");
  }
  if (col_regime < 0 || col_x < 0 || col_y < 0) throw DataError("dataset needs regime, x and y columns");
  RegimeDataset d(col_c.size());
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields");
    RegimeRow row;
    row.regime = parse_regime(cells[static_cast<std::size_t>(col_regime)]);
    row.x = detail::parse_double(cells[static_cast<std::size_t>(col_x)], lineno);
    row.y = detail::parse_double(cells[static_cast<std::size_t>(col_y)], lineno);
    for (int c : col_c) row.c.push_back(detail::parse_double(cells[static_cast<std::size_t>(c)], lineno));
    if (col_split >= 0) row.split = parse_split(cells[static_cast<std::size_t>(col_split)]);
    d.add(std::move(row));
  }
  return d;
}

}  // namespace causal_reduction
