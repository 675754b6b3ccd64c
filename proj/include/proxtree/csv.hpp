#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace proxtree {

// A parsed CSV file: header plus string cells. `line` holds the 1-based
// source line of each record for error messages.
struct CsvData {
  std::filesystem::path source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> line;

  std::optional<std::size_t> find(std::string_view column) const;
  // Throws InputError naming the file and column.
  std::size_t require(std::string_view column) const;
};

// Reads RFC-4180-style CSV (double-quoted fields, "" escapes). Accepts LF or
// CRLF line endings and a UTF-8 byte-order mark. Blank lines are skipped.
CsvData read_csv(const std::filesystem::path& path);
CsvData parse_csv(std::string_view text, std::filesystem::path source = "<memory>");

// Strict decimal parse ('.' separator). Returns nullopt on malformed text.
std::optional<double> parse_number(std::string_view text);

bool is_missing(std::string_view cell);

// Writes one CSV record, quoting fields that need it.
void write_csv_record(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace proxtree
