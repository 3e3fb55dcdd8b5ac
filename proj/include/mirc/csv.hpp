#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mirc::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;
  /// 1-based source line of each row (for error messages).
  std::vector<std::size_t> lines;
  /// Leading `#` lines before the header, without the marker (provenance such as the seed).
  std::vector<std::string> comments;

  /// Column index by header name; throws Error(Parse) when absent.
  std::size_t column(std::string_view name) const;
};

/// RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF. Leading `#` lines are kept as comments.
Table parse(std::string_view text);
Table read_file(const std::string& path);

/// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

}  // namespace mirc::csv
