#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sbr {

/// A parsed CSV file: one header row plus string cells.
class CsvTable {
 public:
  static CsvTable read(const std::filesystem::path& path);
  static CsvTable parse(const std::string& text);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  std::optional<std::size_t> column(const std::string& name) const;
  /// Throws SchemaError when the column is absent.
  std::size_t require_column(const std::string& name) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Streaming writer; quotes cells only when needed.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void row(const std::vector<std::string>& cells);

 private:
  std::ostream& out_;
};

/// Shortest round-trippable decimal rendering used for every numeric CSV cell.
std::string format_number(double value);

std::optional<double> parse_optional_double(const std::string& cell);
double parse_double(const std::string& cell);
long long parse_integer(const std::string& cell);

}  // namespace sbr
