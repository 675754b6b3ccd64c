#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "proxtree/bart.hpp"
#include "proxtree/cart.hpp"
#include "proxtree/forest.hpp"
#include "proxtree/linear.hpp"
#include "proxtree/table.hpp"

namespace proxtree {

// Any fitted learner behind one point-prediction interface. Serialized as
// {"kind": "ols" | "lasso" | "tree" | "forest" | "bart", "model": {...}}.
class FittedModel {
 public:
  using Variant = std::variant<LinearModel, RegressionTree, ForestModel, BartModel>;

  FittedModel() = default;
  FittedModel(LinearModel m) : model_(std::move(m)) {}
  FittedModel(RegressionTree m) : model_(std::move(m)) {}
  FittedModel(ForestModel m) : model_(std::move(m)) {}
  FittedModel(BartModel m) : model_(std::move(m)) {}

  std::string kind() const;
  const std::vector<std::string>& features() const;
  const Variant& variant() const noexcept { return model_; }
  template <class T>
  const T* get_if() const noexcept {
    return std::get_if<T>(&model_);
  }

  // Point predictions; the posterior mean for BART.
  std::vector<double> predict(const FeatureTable& table) const;

  // Point predictions after substituting columns `features` (indices into
  // features()) by `replacement`. `base` must equal predict(table). Learners
  // that can skip work (tree ensembles) only re-evaluate the affected trees.
  std::vector<double> predict_replaced(const FeatureTable& table, std::span<const std::size_t> features,
                                       std::span<const std::vector<double>> replacement,
                                       std::span<const double> base) const;

  bool has_draws() const noexcept { return std::holds_alternative<BartModel>(model_); }
  // D x q posterior draws; throws ConfigError for learners without a posterior.
  std::vector<double> predict_draws(const FeatureTable& table, std::size_t* draw_count = nullptr) const;

  nlohmann::json to_json() const;
  static FittedModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static FittedModel load(const std::filesystem::path& path);

 private:
  Variant model_;
};

}  // namespace proxtree
