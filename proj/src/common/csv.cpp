#include "ideoscale/csv.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "ideoscale/error.hpp"

namespace ideo::csv {

int Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

int Table::require_column(std::string_view name) const {
  int c = column(name);
  if (c < 0) throw ParseError("csv: missing column '" + std::string(name) + "'");
  return c;
}

Table parse(std::string_view text, bool has_header) {
  Table out;
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool at_line_start = true;
  bool field_started = false;
  std::size_t i = 0;
  const std::size_t n = text.size();

  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    rows.push_back(std::move(row));
    row.clear();
    at_line_start = true;
    field_started = false;
  };

  // Strip UTF-8 BOM.
  if (n >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;

  while (i < n) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field.push_back('"');
          i += 2;
          continue;
        }
        in_quotes = false;
        ++i;
        continue;
      }
      field.push_back(c);
      ++i;
      continue;
    }
    if (at_line_start && c == '#') {
      while (i < n && text[i] != '\n') ++i;
      ++i;
      continue;
    }
    if (at_line_start && (c == '\n' || c == '\r')) {
      ++i;  // blank line
      continue;
    }
    at_line_start = false;
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
      ++i;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
      ++i;
    } else if (c == '\r') {
      ++i;
    } else if (c == '\n') {
      end_row();
      ++i;
    } else {
      field.push_back(c);
      field_started = true;
      ++i;
    }
  }
  if (in_quotes) throw ParseError("csv: unterminated quoted field");
  if (!at_line_start) end_row();

  std::size_t start = 0;
  if (has_header) {
    if (rows.empty()) throw ParseError("csv: missing header row");
    out.header = std::move(rows[0]);
    start = 1;
  }
  for (std::size_t r = start; r < rows.size(); ++r) {
    if (has_header && rows[r].size() != out.header.size())
      throw ParseError("csv: row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                       " fields, header has " + std::to_string(out.header.size()));
    out.rows.push_back(std::move(rows[r]));
  }
  return out;
}

Table read_file(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("csv: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), has_header);
}

std::string escape(std::string_view field) {
  bool quote = field.find_first_of(",\"\n\r") != std::string_view::npos ||
               (!field.empty() && field.front() == '#');
  if (!quote) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(row[i]);
  }
  out.push_back('\n');
  return out;
}

void write_row(std::ostream& os, const Row& row) { os << format_row(row); }

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace ideo::csv
