#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "proxtree/model.hpp"
#include "proxtree/table.hpp"

namespace proxtree {

double mse(std::span<const double> y, std::span<const double> yhat);

// (mse_perm / mse_base - 1) * 100.
double importance_percent(double mse_perm, double mse_base);

// Columns permuted together by one row permutation.
struct FeatureGroup {
  std::string name;
  std::vector<std::string> columns;
};

// One group per model feature, except that one-hot columns "attr=level"
// sharing a prefix form a single group named "attr" (unless per_indicator).
std::vector<FeatureGroup> default_groups(std::span<const std::string> features, bool per_indicator = false);

struct ImportanceOptions {
  std::size_t permutations = 3;  // K
  std::uint64_t seed = 0;
  bool local = false;
  std::vector<FeatureGroup> groups;  // empty: default_groups(model features)
  bool per_indicator = false;
};

struct ImportanceEntry {
  std::string feature;
  double importance_pct = 0.0;  // (mse_perm / mse_base - 1) * 100
  double mse_perm = 0.0;        // mean over the K replicates
};

struct ImportanceReport {
  std::vector<ImportanceEntry> entries;  // in group order
  double mse_base = 0.0;
  std::size_t permutations = 0;
  std::uint64_t seed = 0;
  // rows x groups, row-major: per-row squared-error increase averaged over K.
  std::vector<std::string> row_ids;
  std::vector<double> local;

  double local_at(std::size_t row, std::size_t group) const { return local[row * entries.size() + group]; }
  const ImportanceEntry& entry(const std::string& feature) const;
  // Entry indices by decreasing importance (ties keep group order).
  std::vector<std::size_t> ranking() const;
};

// Group g, replicate k draws its permutation from derive_seed(seed, {g, k}).
// A replicate whose permutation is the identity reuses the base errors.
ImportanceReport permutation_importance(const FittedModel& model, const FeatureTable& test,
                                        const ImportanceOptions& options = {});

// CSV `feature,importance_pct,mse_perm,mse_base,k`, rows by decreasing importance.
void write_importance_csv(std::ostream& out, const ImportanceReport& report);
// CSV `id,<group>...` of the local matrix.
void write_local_csv(std::ostream& out, const ImportanceReport& report);

// Local matrix read back from write_local_csv output.
struct LocalMatrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> features;
  std::vector<double> values;  // row-major
};
LocalMatrix read_local_csv(const std::filesystem::path& path);

}  // namespace proxtree
