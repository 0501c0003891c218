#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace busoff::cli {

enum class Format { Csv, Json };

Format parse_format(std::string_view text);

/// Empty cells are written as an empty CSV field and as JSON null.
using Cell = std::variant<std::monostate, double, long long, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row);
};

/// Doubles are printed with 17 significant digits.
std::string format_double(double v);

void write_csv(std::ostream& os, const Table& table);

/// {"columns": [...], "rows": [[...], ...]}
nlohmann::json to_json(const Table& table);

/// Writes `<dir>/<stem>.csv` or `<dir>/<stem>.json`; returns the path.
std::filesystem::path write_table(const Table& table,
                                  const std::filesystem::path& dir,
                                  std::string_view stem, Format format);

}  // namespace busoff::cli
