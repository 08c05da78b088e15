#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "viewex/error.hpp"

namespace viewex::csv {

/// RFC-4180 reader: quoted fields, doubled quotes, embedded newlines, CRLF.
/// Returns false at end of input.
inline bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  bool field_was_quoted = false;
  char ch;
  while (in.get(ch)) {
    any = true;
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      if (!field.empty()) fail(ErrorKind::ParseError, "stray quote on line " + std::to_string(line));
      in_quotes = true;
      field_was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get(ch);
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else if (ch == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else {
      if (field_was_quoted) fail(ErrorKind::ParseError, "text after closing quote on line " + std::to_string(line));
      field.push_back(ch);
    }
  }
  if (in_quotes) fail(ErrorKind::ParseError, "unterminated quoted field on line " + std::to_string(line));
  if (!any) return false;
  fields.push_back(std::move(field));
  ++line;
  return true;
}

inline void write_field(std::ostream& out, std::string_view s) {
  const bool quote = s.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!quote) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

inline void write_record(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    write_field(out, fields[i]);
  }
  out << '\n';
}

}  // namespace viewex::csv
