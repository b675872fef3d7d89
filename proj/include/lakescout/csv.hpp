#pragma once

// RFC 4180 reader/writer: comma separated, double-quote quoting, "" escapes,
// quoted fields may span lines. CRLF and LF line endings are both accepted.

#include "error.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace lakescout::csv {

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line on which the record starts
};

// Throws ValidationError naming `source` and the line for unterminated quotes,
// stray quotes inside unquoted fields, and ragged rows.
inline std::vector<Row> parse(std::string_view text, const std::string& source) {
  std::vector<Row> rows;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto fail = [&](std::size_t at, const std::string& what) {
    throw ValidationError(source + ":" + std::to_string(at) + ": " + what);
  };

  while (i < n) {
    if (text[i] == '\r' || text[i] == '\n') {
      // A bare blank line carries no record.
      if (text[i] == '\r' && i + 1 < n && text[i + 1] == '\n') ++i;
      ++i;
      ++line;
      continue;
    }
    Row row;
    row.line = line;
    std::string field;
    bool in_quotes = false;
    bool was_quoted = false;
    bool done = false;
    while (!done) {
      if (i >= n) {
        if (in_quotes) fail(row.line, "unterminated quoted field");
        row.fields.push_back(std::move(field));
        done = true;
        break;
      }
      const char c = text[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < n && text[i + 1] == '"') {
            field.push_back('"');
            i += 2;
          } else {
            in_quotes = false;
            ++i;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
          ++i;
        }
        continue;
      }
      if (c == '"') {
        if (!field.empty() || was_quoted) fail(line, "unexpected quote inside unquoted field");
        in_quotes = true;
        was_quoted = true;
        ++i;
      } else if (c == ',') {
        row.fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
        ++i;
      } else if (c == '\r' || c == '\n') {
        if (c == '\r' && i + 1 < n && text[i + 1] == '\n') ++i;
        ++i;
        ++line;
        row.fields.push_back(std::move(field));
        done = true;
      } else {
        if (was_quoted) fail(line, "characters after closing quote");
        field.push_back(c);
        ++i;
      }
    }
    if (!rows.empty() && row.fields.size() != rows.front().fields.size()) {
      fail(row.line, "expected " + std::to_string(rows.front().fields.size()) + " fields, found " +
                         std::to_string(row.fields.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string quote(std::string_view field) {
  const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos || field.empty();
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string format_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += quote(fields[i]);
  }
  out.push_back('\n');
  return out;
}

}  // namespace lakescout::csv
