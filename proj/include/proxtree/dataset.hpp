#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proxtree/csv.hpp"
#include "proxtree/spatial.hpp"
#include "proxtree/table.hpp"

namespace proxtree {

// zip -> centroid. Zips are matched as zero-padded 5-character strings.
class Gazetteer {
 public:
  void add(const std::string& zip, GeoPoint centroid);
  std::optional<GeoPoint> find(const std::string& zip) const;
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  // Entries in ascending zip order.
  const std::vector<std::pair<std::string, GeoPoint>>& entries() const noexcept { return entries_; }

 private:
  std::vector<std::pair<std::string, GeoPoint>> entries_;  // sorted by zip
};

std::string normalize_zip(const std::string& zip);

Gazetteer load_gazetteer(const std::filesystem::path& path);

struct CategoricalSpec {
  std::string name;
  std::vector<std::string> levels;  // first level is the dropped reference
};

// User-declared description of the observation attributes. Columns not
// declared here are inferred: numeric when every non-missing value parses,
// categorical (levels sorted) otherwise.
struct Schema {
  std::string id_column = "id";
  std::optional<std::string> outcome;
  std::vector<CategoricalSpec> categorical;
  std::vector<std::string> numeric;
  std::vector<std::string> ignore;
};

Schema load_schema(const std::filesystem::path& path);

enum class MissingPolicy { reject, impute };

struct LoadOptions {
  bool strict = true;  // unknown zip is an error; otherwise the row is dropped
  MissingPolicy missing = MissingPolicy::reject;
};

// Raw attribute columns as text, one vector per column, row-aligned with the
// observations.
struct AttributeFrame {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> values;
  std::size_t rows() const { return values.empty() ? 0 : values.front().size(); }
};

struct RowIssue {
  std::size_t line = 0;
  std::string message;
};

struct ObservationData {
  std::vector<Observation> points;
  AttributeFrame attributes;
  std::optional<std::vector<double>> outcome;
  std::vector<RowIssue> dropped;  // rows skipped in non-strict mode
};

// observations CSV: id,lat,lon[,zip],<attributes...>[,outcome]. When lat/lon
// are empty (or absent) the zip is resolved through the gazetteer.
ObservationData load_observations(const std::filesystem::path& path, const Schema& schema,
                                  const Gazetteer* gazetteer, const LoadOptions& options = {});

// events CSV: id,lat,lon,time,size[,flag columns...]
EventCatalog load_events(const std::filesystem::path& path);

// One-hot encoder with a fixed level set per categorical column. Numeric
// attributes pass through; indicator columns are named "<column>=<level>".
class Encoder {
 public:
  Encoder() = default;
  // Levels come from the schema when declared, otherwise from the data.
  static Encoder fit(const AttributeFrame& frame, const Schema& schema);

  // Throws InputError naming the column and level for unseen levels.
  FeatureTable encode(const AttributeFrame& frame, std::vector<std::string> ids) const;
  void encode_into(const AttributeFrame& frame, FeatureTable& table) const;

  const std::vector<CategoricalSpec>& categorical() const noexcept { return categorical_; }
  const std::vector<std::string>& numeric() const noexcept { return numeric_; }
  std::size_t output_width() const;

 private:
  std::vector<CategoricalSpec> categorical_;
  std::vector<std::string> numeric_;
  std::vector<std::string> order_;  // declaration order of all encoded columns
};

// Replaces missing cells: median for numeric columns, mode for categorical
// ones (ties to the smallest level). Numeric-ness follows the encoder.
void impute_missing(AttributeFrame& frame, const Encoder& encoder);

struct SplitSpec {
  std::optional<std::size_t> train_count;
  double train_fraction = 0.5;
  std::uint64_t seed = 1;
};

// Random train/test partition. Deterministic in (row order, seed); both parts
// keep the original row order.
std::pair<FeatureTable, FeatureTable> split(const FeatureTable& table, const SplitSpec& spec);
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            const SplitSpec& spec);

// FeatureTable CSV: id,<feature columns...>[,<outcome>] with doubles printed
// in shortest round-trip form, so a write/read cycle is exact.
void write_feature_table(std::ostream& out, const FeatureTable& table);
void write_feature_table(const std::filesystem::path& path, const FeatureTable& table);
// `outcome` names the outcome column; when empty, a column called "outcome"
// is used if present.
FeatureTable read_feature_table(const std::filesystem::path& path,
                                const std::optional<std::string>& outcome = std::nullopt);
FeatureTable parse_feature_table(const CsvData& csv,
                                 const std::optional<std::string>& outcome);

}  // namespace proxtree
