#include "proxtree/csv.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "proxtree/errors.hpp"

namespace proxtree {

std::optional<std::size_t> CsvData::find(std::string_view column) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == column) return j;
  return std::nullopt;
}

std::size_t CsvData::require(std::string_view column) const {
  if (auto j = find(column)) return *j;
  throw InputError(source.string() + ": missing required column '" + std::string(column) + "'");
}

CsvData parse_csv(std::string_view text, std::filesystem::path source) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  CsvData data;
  data.source = std::move(source);
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto finish_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    const bool blank = record.size() == 1 && record[0].empty() && !field_started;
    if (!blank) {
      if (data.header.empty()) {
        data.header = std::move(record);
      } else {
        if (record.size() != data.header.size())
          throw InputError(data.source.string() + ":" + std::to_string(record_line) + ": expected " +
                           std::to_string(data.header.size()) + " fields, found " +
                           std::to_string(record.size()));
        data.records.push_back(std::move(record));
        data.line.push_back(record_line);
      }
    }
    record.clear();
    field_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        finish_record();
        ++line;
        record_line = line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw InputError(data.source.string() + ": unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) finish_record();
  if (data.header.empty()) throw InputError(data.source.string() + ": empty CSV file");
  return data;
}

CsvData read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path);
}

std::optional<double> parse_number(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN";
}

void write_csv_record(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t j = 0; j < fields.size(); ++j) {
    if (j) out << ',';
    const auto& f = fields[j];
    if (f.find_first_of(",\"\n\r") != std::string::npos) {
      out << '"';
      for (char c : f) {
        if (c == '"') out << '"';
        out << c;
      }
      out << '"';
    } else {
      out << f;
    }
  }
  out << '\n';
}

}  // namespace proxtree
