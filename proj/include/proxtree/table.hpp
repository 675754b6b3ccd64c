#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace proxtree {

// Column-major numeric modeling table: named feature columns, row ids, and an
// optional outcome column. One-hot indicator columns are named
// "<attribute>=<level>"; the prefix identifies the categorical block.
class FeatureTable {
 public:
  FeatureTable() = default;
  explicit FeatureTable(std::vector<std::string> ids) : ids_(std::move(ids)) {}

  std::size_t rows() const noexcept { return ids_.size(); }
  std::size_t cols() const noexcept { return names_.size(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t j) const { return names_.at(j); }

  std::span<const double> column(std::size_t j) const { return columns_.at(j); }
  std::span<double> mutable_column(std::size_t j) { return columns_.at(j); }
  std::span<const double> column(std::string_view name) const { return column(column_index(name)); }

  // Throws InputError naming the column when absent.
  std::size_t column_index(std::string_view name) const;
  std::optional<std::size_t> find_column(std::string_view name) const;
  bool has_column(std::string_view name) const { return find_column(name).has_value(); }

  // Appends a column; rejects duplicate names and length mismatches.
  void add_column(std::string name, std::vector<double> values);
  void set_column(std::string_view name, std::vector<double> values);

  bool has_outcome() const noexcept { return outcome_.has_value(); }
  std::span<const double> outcome() const;
  const std::string& outcome_name() const noexcept { return outcome_name_; }
  void set_outcome(std::vector<double> values, std::string name = "outcome");
  void clear_outcome() { outcome_.reset(); }

  FeatureTable select_rows(std::span<const std::size_t> rows) const;
  // Keeps the named columns, in the given order. The outcome is kept.
  FeatureTable select_columns(std::span<const std::string> names) const;

  // Checks the assembly invariants: unique names, equal lengths, finite
  // values (features and outcome). Throws InputError.
  void validate() const;

 private:
  std::vector<std::string> ids_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::optional<std::vector<double>> outcome_;
  std::string outcome_name_ = "outcome";
};

// Maps each of `wanted` to its column index in `table`; throws InputError
// naming the first missing column.
std::vector<std::size_t> resolve_columns(const FeatureTable& table,
                                         std::span<const std::string> wanted);

}  // namespace proxtree
