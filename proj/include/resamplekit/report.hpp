#pragma once

#include <algorithm>
#include <cstdio>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace resamplekit {

/// Table cell: text, integer or real; reals carry a standard error when they
/// came out of a Monte Carlo run.
struct Cell {
  std::variant<std::string, long long, double> value;
  std::optional<double> se;

  static Cell text(std::string s) { return {std::move(s), std::nullopt}; }
  static Cell integer(long long v) { return {v, std::nullopt}; }
  static Cell real(double v) { return {v, std::nullopt}; }
  static Cell measured(double v, double se) { return {v, se}; }
};

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  nlohmann::json settings = nlohmann::json::object();
};

inline std::string format_sig(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

namespace detail {

inline std::string cell_text(const Cell& c) {
  std::string out;
  if (const auto* s = std::get_if<std::string>(&c.value)) out = *s;
  else if (const auto* i = std::get_if<long long>(&c.value)) out = std::to_string(*i);
  else out = format_sig(std::get<double>(c.value));
  if (c.se) out += " (" + format_sig(*c.se) + ")";
  return out;
}

inline nlohmann::json cell_json(const Cell& c) {
  nlohmann::json v;
  if (const auto* s = std::get_if<std::string>(&c.value)) v = *s;
  else if (const auto* i = std::get_if<long long>(&c.value)) v = *i;
  else v = std::get<double>(c.value);
  if (!c.se) return v;
  return {{"value", v}, {"se", *c.se}};
}

inline std::vector<bool> columns_with_se(const Table& t) {
  std::vector<bool> out(t.columns.size(), false);
  for (const auto& row : t.rows)
    for (std::size_t c = 0; c < row.size() && c < out.size(); ++c) out[c] = out[c] || row[c].se.has_value();
  return out;
}

}  // namespace detail

/// Aligned plain-text table; MC cells print as "value (se)".
inline std::string format_table(const Table& t) {
  std::vector<std::vector<std::string>> cells{t.columns};
  for (const auto& row : t.rows) {
    std::vector<std::string> line;
    for (const auto& c : row) line.push_back(detail::cell_text(c));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(t.columns.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size() && c < width.size(); ++c) width[c] = std::max(width[c], line[c].size());
  std::string out = "# " + t.name + "\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      if (c) line += "  ";
      line += cells[i][c];
      if (c + 1 < cells[i].size()) line.append(width[c] - cells[i][c].size(), ' ');
    }
    out += line + "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

/// CSV with a separate `<column>_se` column wherever any cell has an SE.
inline std::string format_csv(const Table& t) {
  const auto se = detail::columns_with_se(t);
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (c) out += ",";
    out += quote(t.columns[c]);
    if (se[c]) out += "," + quote(t.columns[c] + "_se");
  }
  out += "\n";
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ",";
      Cell bare = row[c];
      bare.se.reset();
      out += quote(detail::cell_text(bare));
      if (c < se.size() && se[c]) out += "," + (row[c].se ? format_sig(*row[c].se) : std::string());
    }
    out += "\n";
  }
  return out;
}

/// Full-precision JSON: {"table", "settings", "rows": [{column: value}]}.
inline nlohmann::json table_json(const Table& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t c = 0; c < row.size() && c < t.columns.size(); ++c) j[t.columns[c]] = detail::cell_json(row[c]);
    rows.push_back(std::move(j));
  }
  return {{"table", t.name}, {"settings", t.settings}, {"columns", t.columns}, {"rows", std::move(rows)}};
}

}  // namespace resamplekit
