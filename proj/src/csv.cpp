#include "mirc/csv.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "mirc/error.hpp"
#include "mirc/image_io.hpp"

namespace mirc::csv {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw Error(ErrorKind::Parse, "csv: missing column '" + std::string(name) + "'");
}

Table parse(std::string_view text) {
  Table table;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool row_has_data = false;
  std::size_t line = 1;
  std::size_t row_line = 1;

  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    if (table.header.empty()) {
      table.header = std::move(row);
    } else {
      table.rows.push_back(std::move(row));
      table.lines.push_back(row_line);
    }
    row.clear();
    row_has_data = false;
  };

  std::size_t start = 0;
  while (start < text.size() && text[start] == '#') {
    std::size_t eol = text.find('\n', start);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view comment = text.substr(start + 1, eol - start - 1);
    if (!comment.empty() && comment.back() == '\r') comment.remove_suffix(1);
    table.comments.emplace_back(comment);
    start = eol + 1;
    row_line = ++line;
  }

  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_data = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_has_data = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_data || !field.empty()) end_row();
        ++line;
        row_line = line;
        break;
      default:
        if (!row_has_data) row_line = line;
        field += c;
        row_has_data = true;
    }
  }
  if (in_quotes) throw Error(ErrorKind::Parse, "csv: unterminated quote starting near line " + std::to_string(row_line));
  if (row_has_data || !field.empty()) end_row();

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != table.header.size()) {
      throw Error(ErrorKind::Parse, "csv: line " + std::to_string(table.lines[r]) + " has " +
                                        std::to_string(table.rows[r].size()) + " fields, expected " +
                                        std::to_string(table.header.size()));
    }
  }
  return table;
}

Table read_file(const std::string& path) { return parse(io::read_text(path)); }

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << escape(row[i]);
  }
  out << '\n';
}

}  // namespace mirc::csv
