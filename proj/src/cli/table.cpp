#include "busoff/cli/table.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "busoff/errors.hpp"

namespace busoff::cli {

Format parse_format(std::string_view text) {
  if (text == "csv") return Format::Csv;
  if (text == "json") return Format::Json;
  throw ValidationError("output.format must be 'csv' or 'json', got '" +
                        std::string(text) + "'");
}

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw std::logic_error("table row has " + std::to_string(row.size()) +
                           " cells, expected " +
                           std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

namespace {

std::string csv_cell(const Cell& c) {
  struct {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(double v) const { return format_double(v); }
    std::string operator()(long long v) const { return std::to_string(v); }
    std::string operator()(const std::string& s) const { return s; }
  } visitor;
  return std::visit(visitor, c);
}

nlohmann::json json_cell(const Cell& c) {
  struct {
    nlohmann::json operator()(std::monostate) const { return nullptr; }
    nlohmann::json operator()(double v) const {
      // JSON has no inf/nan; keep the CSV spelling.
      if (!std::isfinite(v)) return format_double(v);
      return v;
    }
    nlohmann::json operator()(long long v) const { return v; }
    nlohmann::json operator()(const std::string& s) const { return s; }
  } visitor;
  return std::visit(visitor, c);
}

}  // namespace

void write_csv(std::ostream& os, const Table& table) {
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    os << (i ? "," : "") << table.columns[i];
  }
  os << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      os << (i ? "," : "") << csv_cell(row[i]);
    }
    os << '\n';
  }
}

nlohmann::json to_json(const Table& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) r.push_back(json_cell(c));
    rows.push_back(std::move(r));
  }
  return {{"columns", table.columns}, {"rows", std::move(rows)}};
}

std::filesystem::path write_table(const Table& table,
                                  const std::filesystem::path& dir,
                                  std::string_view stem, Format format) {
  auto path = dir / (std::string(stem) +
                     (format == Format::Csv ? ".csv" : ".json"));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  if (format == Format::Csv) {
    write_csv(os, table);
  } else {
    os << to_json(table).dump(2) << '\n';
  }
  if (!os) throw ValidationError("failed writing " + path.string());
  return path;
}

}  // namespace busoff::cli
