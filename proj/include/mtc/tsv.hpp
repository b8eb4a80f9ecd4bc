#pragma once

#include <cstdio>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtc/error.hpp"
#include "mtc/hash.hpp"

namespace mtc::tsv {

inline std::vector<std::string> split(std::string_view line, char sep = '\t') {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

/// A headed, tab-separated table. Line numbers are 1-based and count the
/// header, matching what an editor shows.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::string source;

  bool has(std::string_view column) const {
    for (const auto& h : header)
      if (h == column) return true;
    return false;
  }

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError(source + ": missing column '" + std::string(name) + "' in header (line 1)");
  }
};

inline Table parse(std::string_view text, std::string source) {
  Table t;
  t.source = std::move(source);
  std::size_t line_no = 0;
  std::size_t start = 0;
  bool have_header = false;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!have_header) {
      t.header = split(line);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != t.header.size()) {
      throw FormatError(t.source + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                        " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  return t;
}

inline Table read(const std::string& path) { return parse(read_file(path), path); }

/// Rejects characters that would break the on-disk row structure.
inline const std::string& checked_field(const std::string& f) {
  if (f.find_first_of("\t\n\r") != std::string::npos) {
    throw FormatError("field contains a tab or newline: '" + f + "'");
  }
  return f;
}

inline std::string join_row(const std::vector<std::string>& fields) {
  std::string s;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) s += '\t';
    s += checked_field(fields[i]);
  }
  s += '\n';
  return s;
}

}  // namespace mtc::tsv
