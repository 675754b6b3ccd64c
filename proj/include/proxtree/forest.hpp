#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "proxtree/cart.hpp"
#include "proxtree/table.hpp"

namespace proxtree {

struct ForestControls {
  std::size_t trees = 200;
  std::optional<std::size_t> mtry;  // default max(1, floor(p / 3))
  bool bootstrap = true;            // false: every tree sees all rows once
  TreeControls tree{10, 5, 0.0, std::nullopt};
};

struct OobResult {
  double mse = 0.0;
  std::size_t rows_used = 0;
  std::size_t rows_excluded = 0;     // in every bag; no out-of-bag tree
  std::vector<double> predictions;   // NaN for excluded rows
};

class ForestModel {
 public:
  ForestModel() = default;

  const std::vector<std::string>& features() const noexcept { return features_; }
  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
  // Bag of tree b: the n row indices drawn (sorted, repeats kept).
  const std::vector<std::vector<std::uint32_t>>& bags() const noexcept { return bags_; }
  std::size_t mtry() const noexcept { return mtry_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t training_rows() const noexcept { return n_train_; }

  // Mean over trees, summed in tree order.
  std::vector<double> predict(const FeatureTable& table) const;
  // Rows x trees, row-major.
  std::vector<double> predict_per_tree(const FeatureTable& table) const;

  // Out-of-bag error on the training table the forest was fit to. Rows that
  // fall in every bag are skipped and reported through warn().
  OobResult oob(const FeatureTable& train) const;

  nlohmann::json to_json() const;
  static ForestModel from_json(const nlohmann::json& j);

  friend ForestModel fit_forest(const FeatureTable&, const ForestControls&, std::uint64_t);

 private:
  std::vector<std::string> features_;
  std::vector<RegressionTree> trees_;
  std::vector<std::vector<std::uint32_t>> bags_;
  std::size_t mtry_ = 0;
  std::uint64_t seed_ = 0;
  std::size_t n_train_ = 0;
  bool bootstrap_ = true;
};

// Tree b draws its bag and its per-node column samples from
// derive_seed(seed, {b}); results do not depend on the thread count.
ForestModel fit_forest(const FeatureTable& train, const ForestControls& controls, std::uint64_t seed);

double oob_mse(const ForestModel& model, const FeatureTable& train);

}  // namespace proxtree
