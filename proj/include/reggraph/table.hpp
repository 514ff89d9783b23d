#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "reggraph/error.hpp"

namespace reggraph {

inline constexpr const char* kCsvSchema = "reggraph-csv-1";

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) fail("number formatting failed");
  return std::string(buf, end);
}

using Cell = std::variant<double, std::uint64_t, std::string>;

inline std::string format_cell(const Cell& c) {
  if (auto d = std::get_if<double>(&c)) return format_double(*d);
  if (auto u = std::get_if<std::uint64_t>(&c)) return std::to_string(*u);
  return std::get<std::string>(c);
}

/// In-memory CSV table. The first column of every table is `row_type`.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  int col(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    fail("no column '" + name + "'");
  }

  double number(const std::vector<Cell>& row, const std::string& name) const {
    const Cell& c = row.at(col(name));
    if (auto d = std::get_if<double>(&c)) return *d;
    if (auto u = std::get_if<std::uint64_t>(&c)) return static_cast<double>(*u);
    fail("column '" + name + "' is not numeric");
  }

  std::string text(const std::vector<Cell>& row, const std::string& name) const {
    return format_cell(row.at(col(name)));
  }

  /// Rows whose row_type equals `type`.
  std::vector<const std::vector<Cell>*> select(const std::string& type) const {
    std::vector<const std::vector<Cell>*> out;
    for (const auto& r : rows)
      if (std::get<std::string>(r.at(0)) == type) out.push_back(&r);
    return out;
  }

  void write_csv(std::ostream& os) const {
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_cell(r[i]);
      os << '\n';
    }
  }
};

}  // namespace reggraph
