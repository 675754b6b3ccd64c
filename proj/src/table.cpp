#include "proxtree/table.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "proxtree/errors.hpp"

namespace proxtree {

std::optional<std::size_t> FeatureTable::find_column(std::string_view name) const {
  for (std::size_t j = 0; j < names_.size(); ++j)
    if (names_[j] == name) return j;
  return std::nullopt;
}

std::size_t FeatureTable::column_index(std::string_view name) const {
  if (auto j = find_column(name)) return *j;
  throw InputError("missing column '" + std::string(name) + "'");
}

void FeatureTable::add_column(std::string name, std::vector<double> values) {
  if (values.size() != rows())
    throw InputError("column '" + name + "' has " + std::to_string(values.size()) +
                     " values, table has " + std::to_string(rows()) + " rows");
  if (has_column(name)) throw InputError("duplicate column name '" + name + "'");
  names_.push_back(std::move(name));
  columns_.push_back(std::move(values));
}

void FeatureTable::set_column(std::string_view name, std::vector<double> values) {
  const std::size_t j = column_index(name);
  if (values.size() != rows()) throw InputError("column length mismatch for '" + std::string(name) + "'");
  columns_[j] = std::move(values);
}

std::span<const double> FeatureTable::outcome() const {
  if (!outcome_) throw InputError("table has no outcome column");
  return *outcome_;
}

void FeatureTable::set_outcome(std::vector<double> values, std::string name) {
  if (values.size() != rows())
    throw InputError("outcome has " + std::to_string(values.size()) + " values, table has " +
                     std::to_string(rows()) + " rows");
  outcome_ = std::move(values);
  outcome_name_ = std::move(name);
}

FeatureTable FeatureTable::select_rows(std::span<const std::size_t> rows) const {
  FeatureTable out;
  out.ids_.reserve(rows.size());
  for (std::size_t r : rows) out.ids_.push_back(ids_.at(r));
  out.names_ = names_;
  out.columns_.resize(columns_.size());
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    auto& dst = out.columns_[j];
    dst.reserve(rows.size());
    for (std::size_t r : rows) dst.push_back(columns_[j][r]);
  }
  if (outcome_) {
    std::vector<double> y;
    y.reserve(rows.size());
    for (std::size_t r : rows) y.push_back((*outcome_)[r]);
    out.outcome_ = std::move(y);
  }
  out.outcome_name_ = outcome_name_;
  return out;
}

FeatureTable FeatureTable::select_columns(std::span<const std::string> names) const {
  FeatureTable out(ids_);
  for (const auto& n : names) out.add_column(n, columns_[column_index(n)]);
  out.outcome_ = outcome_;
  out.outcome_name_ = outcome_name_;
  return out;
}

void FeatureTable::validate() const {
  std::unordered_set<std::string> seen;
  for (std::size_t j = 0; j < names_.size(); ++j) {
    if (!seen.insert(names_[j]).second) throw InputError("duplicate column name '" + names_[j] + "'");
    if (columns_[j].size() != rows()) throw InputError("column '" + names_[j] + "' length mismatch");
    for (std::size_t i = 0; i < rows(); ++i)
      if (!std::isfinite(columns_[j][i]))
        throw InputError("non-finite value in column '" + names_[j] + "' at row " + ids_[i]);
  }
  if (outcome_) {
    if (outcome_->size() != rows()) throw InputError("outcome length mismatch");
    for (std::size_t i = 0; i < rows(); ++i)
      if (!std::isfinite((*outcome_)[i])) throw InputError("non-finite outcome at row " + ids_[i]);
  }
}

std::vector<std::size_t> resolve_columns(const FeatureTable& table,
                                         std::span<const std::string> wanted) {
  std::vector<std::size_t> idx;
  idx.reserve(wanted.size());
  for (const auto& name : wanted) idx.push_back(table.column_index(name));
  return idx;
}

}  // namespace proxtree
