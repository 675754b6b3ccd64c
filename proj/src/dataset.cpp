#include "proxtree/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "proxtree/errors.hpp"
#include "proxtree/random.hpp"
#include "proxtree/stats.hpp"

namespace proxtree {

std::string normalize_zip(const std::string& zip) {
  std::string z = zip;
  while (!z.empty() && z.front() == ' ') z.erase(z.begin());
  while (!z.empty() && z.back() == ' ') z.pop_back();
  if (z.size() < 5) z.insert(0, 5 - z.size(), '0');
  return z;
}

void Gazetteer::add(const std::string& zip, GeoPoint centroid) {
  const std::string key = normalize_zip(zip);
  auto it = std::lower_bound(entries_.begin(), entries_.end(), key,
                             [](const auto& e, const std::string& k) { return e.first < k; });
  if (it != entries_.end() && it->first == key) throw InputError("duplicate gazetteer zip '" + key + "'");
  entries_.insert(it, {key, centroid});
}

std::optional<GeoPoint> Gazetteer::find(const std::string& zip) const {
  const std::string key = normalize_zip(zip);
  auto it = std::lower_bound(entries_.begin(), entries_.end(), key,
                             [](const auto& e, const std::string& k) { return e.first < k; });
  if (it == entries_.end() || it->first != key) return std::nullopt;
  return it->second;
}

namespace {

double require_number(const CsvData& csv, std::size_t r, std::size_t c) {
  const auto& cell = csv.records[r][c];
  auto v = parse_number(cell);
  if (!v || !std::isfinite(*v))
    throw InputError(csv.source.string() + ":" + std::to_string(csv.line[r]) + ": malformed number '" +
                     cell + "' in column '" + csv.header[c] + "'");
  return *v;
}

std::string row_context(const CsvData& csv, std::size_t r) {
  return csv.source.string() + ":" + std::to_string(csv.line[r]);
}

}  // namespace

Gazetteer load_gazetteer(const std::filesystem::path& path) {
  const CsvData csv = read_csv(path);
  const std::size_t c_zip = csv.require("zip");
  const std::size_t c_lat = csv.require("lat");
  const std::size_t c_lon = csv.require("lon");
  Gazetteer g;
  for (std::size_t r = 0; r < csv.records.size(); ++r) {
    GeoPoint p;
    try {
      p = GeoPoint::normalized(require_number(csv, r, c_lat), require_number(csv, r, c_lon));
    } catch (const InputError& e) {
      throw InputError(row_context(csv, r) + ": " + e.what());
    }
    g.add(csv.records[r][c_zip], p);
  }
  return g;
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open schema '" + path.string() + "'");
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("schema '" + path.string() + "': " + e.what());
  }
  Schema s;
  try {
    if (j.contains("id")) s.id_column = j.at("id").get<std::string>();
    if (j.contains("outcome")) s.outcome = j.at("outcome").get<std::string>();
    if (j.contains("categorical")) {
      // Either {"party": ["D","I","R"], ...} or [{"name":..., "levels":[...]}].
      const auto& c = j.at("categorical");
      if (c.is_object()) {
        for (const auto& [name, levels] : c.items())
          s.categorical.push_back({name, levels.get<std::vector<std::string>>()});
      } else {
        for (const auto& item : c)
          s.categorical.push_back({item.at("name").get<std::string>(),
                                   item.at("levels").get<std::vector<std::string>>()});
      }
    }
    if (j.contains("numeric")) s.numeric = j.at("numeric").get<std::vector<std::string>>();
    if (j.contains("ignore")) s.ignore = j.at("ignore").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema '" + path.string() + "': " + e.what());
  }
  for (const auto& c : s.categorical)
    if (c.levels.empty()) throw ConfigError("categorical column '" + c.name + "' declares no levels");
  return s;
}

ObservationData load_observations(const std::filesystem::path& path, const Schema& schema,
                                  const Gazetteer* gazetteer, const LoadOptions& options) {
  const CsvData csv = read_csv(path);
  const std::size_t c_id = csv.require(schema.id_column);
  const auto c_lat = csv.find("lat");
  const auto c_lon = csv.find("lon");
  const auto c_zip = csv.find("zip");
  if ((c_lat.has_value() != c_lon.has_value()))
    throw InputError(path.string() + ": lat and lon columns must appear together");
  if (!c_lat && !c_zip) throw InputError(path.string() + ": needs lat/lon or zip columns");

  std::optional<std::size_t> c_outcome;
  if (schema.outcome) c_outcome = csv.require(*schema.outcome);

  std::vector<std::size_t> attr_cols;
  std::set<std::string> ignored(schema.ignore.begin(), schema.ignore.end());
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (c == c_id || c == c_lat || c == c_lon || c == c_zip || c == c_outcome) continue;
    if (ignored.count(csv.header[c])) continue;
    attr_cols.push_back(c);
  }

  ObservationData out;
  out.attributes.names.reserve(attr_cols.size());
  for (std::size_t c : attr_cols) out.attributes.names.push_back(csv.header[c]);
  out.attributes.values.resize(attr_cols.size());
  if (c_outcome) out.outcome.emplace();

  std::set<std::string> seen_ids;
  for (std::size_t r = 0; r < csv.records.size(); ++r) {
    const auto& rec = csv.records[r];
    std::optional<GeoPoint> where;
    const bool has_coords = c_lat && !is_missing(rec[*c_lat]) && !is_missing(rec[*c_lon]);
    if (has_coords) {
      try {
        where = GeoPoint::normalized(require_number(csv, r, *c_lat), require_number(csv, r, *c_lon));
      } catch (const InputError& e) {
        throw InputError(row_context(csv, r) + ": " + e.what());
      }
    } else {
      std::string problem;
      if (!c_zip || is_missing(rec[*c_zip])) {
        problem = "row has neither coordinates nor zip";
      } else if (!gazetteer) {
        problem = "zip '" + rec[*c_zip] + "' needs a gazetteer";
      } else if (auto g = gazetteer->find(rec[*c_zip])) {
        where = *g;
      } else {
        problem = "unknown zip '" + normalize_zip(rec[*c_zip]) + "'";
      }
      if (!where) {
        if (options.strict) throw InputError(row_context(csv, r) + ": " + problem);
        out.dropped.push_back({csv.line[r], problem});
        continue;
      }
    }

    if (!seen_ids.insert(rec[c_id]).second)
      throw InputError(row_context(csv, r) + ": duplicate id '" + rec[c_id] + "'");

    for (std::size_t a = 0; a < attr_cols.size(); ++a) {
      const auto& cell = rec[attr_cols[a]];
      if (is_missing(cell) && options.missing == MissingPolicy::reject)
        throw InputError(row_context(csv, r) + ": missing value in column '" + csv.header[attr_cols[a]] +
                         "' (pass the impute option to fill it)");
      out.attributes.values[a].push_back(is_missing(cell) ? std::string() : cell);
    }
    if (c_outcome) {
      if (is_missing(rec[*c_outcome]))
        throw InputError(row_context(csv, r) + ": missing outcome");
      out.outcome->push_back(require_number(csv, r, *c_outcome));
    }
    out.points.push_back({rec[c_id], *where});
  }
  return out;
}

EventCatalog load_events(const std::filesystem::path& path) {
  const CsvData csv = read_csv(path);
  const std::size_t c_id = csv.require("id");
  const std::size_t c_lat = csv.require("lat");
  const std::size_t c_lon = csv.require("lon");
  const std::size_t c_time = csv.require("time");
  const std::size_t c_size = csv.require("size");
  std::vector<std::size_t> flag_cols;
  EventCatalog catalog;
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (c == c_id || c == c_lat || c == c_lon || c == c_time || c == c_size) continue;
    flag_cols.push_back(c);
    catalog.flag_names.push_back(csv.header[c]);
  }
  for (std::size_t r = 0; r < csv.records.size(); ++r) {
    Event e;
    const double id = require_number(csv, r, c_id);
    if (id != std::floor(id)) throw InputError(row_context(csv, r) + ": event id must be an integer");
    e.id = static_cast<std::int64_t>(id);
    try {
      e.location = GeoPoint::normalized(require_number(csv, r, c_lat), require_number(csv, r, c_lon));
    } catch (const InputError& err) {
      throw InputError(row_context(csv, r) + ": " + err.what());
    }
    e.time = require_number(csv, r, c_time);
    e.size = require_number(csv, r, c_size);
    for (std::size_t c : flag_cols) {
      const double f = require_number(csv, r, c);
      if (f != 0.0 && f != 1.0)
        throw InputError(row_context(csv, r) + ": flag '" + csv.header[c] + "' must be 0 or 1");
      e.flags.push_back(f);
    }
    catalog.events.push_back(std::move(e));
  }
  catalog.validate();
  return catalog;
}

Encoder Encoder::fit(const AttributeFrame& frame, const Schema& schema) {
  Encoder enc;
  std::map<std::string, const CategoricalSpec*> declared_cat;
  for (const auto& c : schema.categorical) declared_cat[c.name] = &c;
  std::set<std::string> declared_num(schema.numeric.begin(), schema.numeric.end());

  for (std::size_t a = 0; a < frame.names.size(); ++a) {
    const auto& name = frame.names[a];
    const auto& cells = frame.values[a];
    if (auto it = declared_cat.find(name); it != declared_cat.end()) {
      enc.categorical_.push_back(*it->second);
    } else if (declared_num.count(name)) {
      enc.numeric_.push_back(name);
    } else {
      bool numeric = true;
      for (const auto& cell : cells)
        if (!cell.empty() && !parse_number(cell)) {
          numeric = false;
          break;
        }
      if (numeric) {
        enc.numeric_.push_back(name);
      } else {
        std::set<std::string> levels;
        for (const auto& cell : cells)
          if (!cell.empty()) levels.insert(cell);
        enc.categorical_.push_back({name, {levels.begin(), levels.end()}});
      }
    }
    enc.order_.push_back(name);
  }
  for (const auto& c : schema.categorical)
    if (std::find(frame.names.begin(), frame.names.end(), c.name) == frame.names.end())
      throw InputError("declared categorical column '" + c.name + "' is not in the data");
  for (const auto& c : schema.numeric)
    if (std::find(frame.names.begin(), frame.names.end(), c) == frame.names.end())
      throw InputError("declared numeric column '" + c + "' is not in the data");
  return enc;
}

std::size_t Encoder::output_width() const {
  std::size_t w = numeric_.size();
  for (const auto& c : categorical_) w += c.levels.size() - 1;
  return w;
}

void Encoder::encode_into(const AttributeFrame& frame, FeatureTable& table) const {
  auto find_attr = [&](const std::string& name) -> const std::vector<std::string>& {
    for (std::size_t a = 0; a < frame.names.size(); ++a)
      if (frame.names[a] == name) return frame.values[a];
    throw InputError("attribute column '" + name + "' missing");
  };
  const std::size_t n = table.rows();
  for (const auto& name : order_) {
    const auto& cells = find_attr(name);
    if (cells.size() != n) throw InputError("attribute column '" + name + "' length mismatch");
    auto cat = std::find_if(categorical_.begin(), categorical_.end(),
                            [&](const CategoricalSpec& c) { return c.name == name; });
    if (cat == categorical_.end()) {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto v = parse_number(cells[i]);
        if (!v || !std::isfinite(*v))
          throw InputError("column '" + name + "', row " + table.ids()[i] + ": malformed number '" +
                           cells[i] + "'");
        col[i] = *v;
      }
      table.add_column(name, std::move(col));
      continue;
    }
    std::vector<std::vector<double>> indicators(cat->levels.size() - 1, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      auto lv = std::find(cat->levels.begin(), cat->levels.end(), cells[i]);
      if (lv == cat->levels.end())
        throw InputError("column '" + name + "': unseen level '" + cells[i] + "'");
      const auto idx = static_cast<std::size_t>(lv - cat->levels.begin());
      if (idx > 0) indicators[idx - 1][i] = 1.0;
    }
    for (std::size_t l = 1; l < cat->levels.size(); ++l)
      table.add_column(name + "=" + cat->levels[l], std::move(indicators[l - 1]));
  }
}

FeatureTable Encoder::encode(const AttributeFrame& frame, std::vector<std::string> ids) const {
  FeatureTable table(std::move(ids));
  encode_into(frame, table);
  return table;
}

void impute_missing(AttributeFrame& frame, const Encoder& encoder) {
  for (std::size_t a = 0; a < frame.names.size(); ++a) {
    auto& cells = frame.values[a];
    const bool numeric = std::find(encoder.numeric().begin(), encoder.numeric().end(), frame.names[a]) !=
                         encoder.numeric().end();
    std::string fill;
    if (numeric) {
      std::vector<double> present;
      for (const auto& c : cells)
        if (!c.empty())
          if (auto v = parse_number(c)) present.push_back(*v);
      if (present.empty()) throw InputError("column '" + frame.names[a] + "' has no observed values");
      fill = format_double(median(std::move(present)));
    } else {
      std::map<std::string, std::size_t> counts;
      for (const auto& c : cells)
        if (!c.empty()) ++counts[c];
      if (counts.empty()) throw InputError("column '" + frame.names[a] + "' has no observed values");
      std::size_t best = 0;
      for (const auto& [level, count] : counts)
        if (count > best) {
          best = count;
          fill = level;
        }
    }
    for (auto& c : cells)
      if (c.empty()) c = fill;
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            const SplitSpec& spec) {
  std::size_t n_train = 0;
  if (spec.train_count) {
    n_train = *spec.train_count;
  } else {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
      throw ConfigError("train fraction must lie in (0, 1)");
    n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n)));
  }
  if (n_train > n)
    throw ConfigError("train count " + std::to_string(n_train) + " exceeds " + std::to_string(n) + " rows");

  Rng rng = make_rng(spec.seed, {0x5b11});
  const auto perm = random_permutation(n, rng);
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

std::pair<FeatureTable, FeatureTable> split(const FeatureTable& table, const SplitSpec& spec) {
  auto [train, test] = split_indices(table.rows(), spec);
  return {table.select_rows(train), table.select_rows(test)};
}

void write_feature_table(std::ostream& out, const FeatureTable& table) {
  std::vector<std::string> header{"id"};
  header.insert(header.end(), table.names().begin(), table.names().end());
  if (table.has_outcome()) header.push_back(table.outcome_name());
  write_csv_record(out, header);
  std::vector<std::string> fields;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    fields.clear();
    fields.push_back(table.ids()[i]);
    for (std::size_t j = 0; j < table.cols(); ++j) fields.push_back(format_double(table.column(j)[i]));
    if (table.has_outcome()) fields.push_back(format_double(table.outcome()[i]));
    write_csv_record(out, fields);
  }
}

void write_feature_table(const std::filesystem::path& path, const FeatureTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  write_feature_table(out, table);
}

FeatureTable parse_feature_table(const CsvData& csv, const std::optional<std::string>& outcome) {
  const std::size_t c_id = csv.require("id");
  std::optional<std::size_t> c_out;
  if (outcome) {
    c_out = csv.require(*outcome);
  } else {
    c_out = csv.find("outcome");
  }
  std::vector<std::string> ids;
  ids.reserve(csv.records.size());
  for (const auto& rec : csv.records) ids.push_back(rec[c_id]);
  FeatureTable table(std::move(ids));
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (c == c_id || c == c_out) continue;
    std::vector<double> col(csv.records.size());
    for (std::size_t r = 0; r < csv.records.size(); ++r) col[r] = require_number(csv, r, c);
    table.add_column(csv.header[c], std::move(col));
  }
  if (c_out) {
    std::vector<double> y(csv.records.size());
    for (std::size_t r = 0; r < csv.records.size(); ++r) y[r] = require_number(csv, r, *c_out);
    table.set_outcome(std::move(y), csv.header[*c_out]);
  }
  return table;
}

FeatureTable read_feature_table(const std::filesystem::path& path,
                                const std::optional<std::string>& outcome) {
  return parse_feature_table(read_csv(path), outcome);
}

}  // namespace proxtree
