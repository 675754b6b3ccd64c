#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxtree/random.hpp"
#include "proxtree/table.hpp"

namespace proxtree {

struct TreeControls {
  std::size_t min_split = 20;  // smallest node that may be split
  std::size_t min_leaf = 7;    // smallest allowed child
  double cp = 0.01;            // a split must remove cp * root SSE
  std::optional<std::size_t> max_splits;

  void validate() const;
};

// Flat node record. Internal nodes send rows with x[feature] < threshold to
// `left`. mean/n/sse describe the training rows reaching the node.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double mean = 0.0;
  std::size_t n = 0;
  double sse = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
};

class RegressionTree {
 public:
  RegressionTree() = default;
  // `features` names the columns node.feature indexes into. Node 0 is the root.
  RegressionTree(std::vector<std::string> features, std::vector<TreeNode> nodes);

  const std::vector<std::string>& features() const noexcept { return features_; }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }

  std::size_t leaf_count() const;
  std::size_t split_count() const { return nodes_.size() - leaf_count(); }
  std::size_t depth() const;
  // Sum of leaf SSE over the training rows.
  double training_sse() const;
  // Sorted indices into features() that appear in at least one split.
  std::vector<std::size_t> used_features() const;

  // `cols[j]` points at the values of features()[j]; returns the leaf node id.
  std::size_t leaf_for(std::span<const double* const> cols, std::size_t row) const;
  double predict_one(std::span<const double* const> cols, std::size_t row) const {
    return nodes_[leaf_for(cols, row)].mean;
  }
  // Throws InputError naming the first split column absent from `table`.
  std::vector<double> predict(const FeatureTable& table) const;
  // Column pointers for features(); columns the tree never splits on may be
  // absent from the table and map to nullptr.
  std::vector<const double*> bind(const FeatureTable& table) const;

  // Complexity used to produce this tree: cp during growth and the pruning
  // alpha (0 for an unpruned tree).
  double cp = 0.0;
  double alpha = 0.0;

  nlohmann::json to_json() const;
  static RegressionTree from_json(const nlohmann::json& j);

  friend bool operator==(const RegressionTree& a, const RegressionTree& b);

 private:
  std::vector<std::string> features_;
  std::vector<TreeNode> nodes_;
};

// Options for the low-level builder shared with the forest.
struct GrowOptions {
  TreeControls controls;
  std::size_t mtry = 0;  // candidate columns per node; 0 means all
  Rng* rng = nullptr;    // required when 0 < mtry < p
};

// Grows on the rows listed in `sample` (repeats allowed, as in a bootstrap).
// cols[j] holds column j for all rows; y the outcome.
RegressionTree grow_rows(std::span<const double* const> cols, std::vector<std::string> names,
                         std::span<const double> y, std::span<const std::size_t> sample,
                         const GrowOptions& options);

// Greedy SSE-reducing growth on every column of `train`. Split candidates are
// midpoints between consecutive distinct values; ties go to the earlier
// column, then the lower threshold. With max_splits set, the frontier node
// with the largest reduction is always expanded first.
RegressionTree grow(const FeatureTable& train, const TreeControls& controls = {});

struct PruneStep {
  double alpha = 0.0;
  RegressionTree tree;
};

// Weakest-link cost-complexity sequence. Entry 0 has alpha 0; alphas are
// strictly increasing and each tree is a pruned subtree of the previous one.
// The last entry is the root leaf.
std::vector<PruneStep> prune_path(const RegressionTree& tree);

struct CvTrace {
  std::vector<double> alphas;  // candidate alphas (geometric midpoints)
  std::vector<double> cv_mse;  // mean held-out squared error per candidate
  std::size_t chosen = 0;
};

// K-fold selection of the pruning alpha by minimum mean CV error, then the
// matching subtree of the full-data tree. Fold trees use controls.cp = 0.
RegressionTree fit_cv(const FeatureTable& train, std::size_t folds, std::uint64_t seed,
                      const TreeControls& controls = {}, CvTrace* trace = nullptr);

}  // namespace proxtree
