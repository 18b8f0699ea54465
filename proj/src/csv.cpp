#include "sbr/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sbr/errors.hpp"

namespace sbr {

namespace {

std::vector<std::vector<std::string>> split_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> current;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        current.push_back(std::move(cell));
        cell.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !cell.empty()) {
          current.push_back(std::move(cell));
          records.push_back(std::move(current));
        }
        current.clear();
        cell.clear();
        any = false;
        break;
      default:
        cell.push_back(ch);
        any = true;
    }
  }
  if (any || !cell.empty()) {
    current.push_back(std::move(cell));
    records.push_back(std::move(current));
  }
  return records;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

CsvTable CsvTable::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

CsvTable CsvTable::parse(const std::string& text) {
  CsvTable table;
  auto records = split_records(text);
  if (records.empty()) throw SchemaError("CSV input has no header row");
  for (auto& h : records.front()) table.header_.push_back(trim(h));
  for (std::size_t r = 1; r < records.size(); ++r) {
    auto& rec = records[r];
    for (auto& c : rec) c = trim(c);
    rec.resize(table.header_.size());
    table.rows_.push_back(std::move(rec));
  }
  return table;
}

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t CsvTable::require_column(const std::string& name) const {
  if (auto c = column(name)) return *c;
  throw SchemaError("missing required column '" + name + "'");
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    const auto& c = cells[i];
    if (c.find_first_of(",\"\n") != std::string::npos) {
      out_ << '"';
      for (char ch : c) {
        if (ch == '"') out_ << '"';
        out_ << ch;
      }
      out_ << '"';
    } else {
      out_ << c;
    }
  }
  out_ << '\n';
}

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_optional_double(const std::string& cell) {
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "na") return std::nullopt;
  return parse_double(cell);
}

double parse_double(const std::string& cell) {
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  auto res = std::from_chars(cell.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ParseError("not a number: '" + cell + "'");
  }
  return v;
}

long long parse_integer(const std::string& cell) {
  long long v = 0;
  const auto* end = cell.data() + cell.size();
  auto res = std::from_chars(cell.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ParseError("not an integer: '" + cell + "'");
  }
  return v;
}

}  // namespace sbr
