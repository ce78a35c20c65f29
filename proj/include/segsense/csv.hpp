#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "segsense/errors.hpp"

namespace segsense {

/// Shortest decimal that round-trips to the same double; "nan"/"inf" for
/// non-finite values.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("nan");
}

inline double parse_double(std::string_view s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline long long parse_int(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

/// Accumulates rows into an in-memory CSV document with '\n' line endings.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : columns_(header.size()) { row(header); }

  CsvTable& row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) {
      throw std::logic_error("CSV row has " + std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(columns_));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) text_ += ',';
      text_ += csv_escape(fields[i]);
    }
    text_ += '\n';
    ++rows_;
    return *this;
  }

  const std::string& str() const noexcept { return text_; }
  std::size_t data_rows() const noexcept { return rows_ - 1; }

 private:
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string text_;
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

/// Header plus rows; every row must have the header's width.
struct CsvDocument {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw DataError("CSV is missing column '" + std::string(name) + "'");
  }
};

inline CsvDocument read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  CsvDocument doc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    // A quoted field may span lines: keep reading while a quote is open.
    const std::size_t first_line = lineno;
    std::string next;
    while (std::count(line.begin(), line.end(), '"') % 2 == 1 && std::getline(in, next)) {
      ++lineno;
      line += '\n';
      line += next;
    }
    auto fields = split_csv_line(line);
    if (doc.header.empty()) {
      doc.header = std::move(fields);
      continue;
    }
    if (fields.size() != doc.header.size()) {
      throw DataError(path.string() + ":" + std::to_string(first_line) + ": expected " +
                      std::to_string(doc.header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    doc.rows.push_back(std::move(fields));
  }
  if (doc.header.empty()) throw DataError("'" + path.string() + "' is empty");
  return doc;
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace segsense
