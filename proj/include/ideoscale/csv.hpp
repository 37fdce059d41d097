#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ideo::csv {

using Row = std::vector<std::string>;

// RFC 4180 reader. Lines starting with '#' outside quotes are treated as
// comments so emitted files may carry a provenance header.
class Table {
 public:
  Row header;
  std::vector<Row> rows;

  // Index of a header column, or -1.
  int column(std::string_view name) const;
  int require_column(std::string_view name) const;
};

Table parse(std::string_view text, bool has_header = true);
Table read_file(const std::filesystem::path& path, bool has_header = true);

std::string escape(std::string_view field);
void write_row(std::ostream& os, const Row& row);
std::string format_row(const Row& row);

// Shortest round-trip representation of a double.
std::string format_double(double v);

}  // namespace ideo::csv
