#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxtree/table.hpp"

namespace proxtree {

// Linear predictor on the original column scale. LASSO fits also carry the
// standardization used during fitting and the penalty (on that scale).
struct LinearModel {
  std::string method = "ols";  // "ols" or "lasso"
  std::vector<std::string> features;
  double intercept = 0.0;
  std::vector<double> coefficients;

  // OLS only.
  double intercept_se = 0.0;
  std::vector<double> std_errors;
  double r_squared = 0.0;
  double adj_r_squared = 0.0;
  double residual_sd = 0.0;
  std::size_t rows = 0;

  // LASSO only: per-column mean and population SD, penalty.
  std::vector<double> means;
  std::vector<double> sds;
  double lambda = 0.0;

  double coefficient(const std::string& name) const;
  std::vector<double> predict(const FeatureTable& table) const;

  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);
};

// Least squares with an intercept. Throws InputError when n <= p + 1 or when
// the design is rank deficient (the message names the dependent columns).
LinearModel fit_ols(const FeatureTable& train);

struct LassoControls {
  std::size_t path_length = 100;
  double min_ratio = 1e-4;  // lambda_min / lambda_max
  std::size_t folds = 10;
  double tolerance = 1e-13;  // on the largest coefficient change in a sweep
  std::size_t max_sweeps = 100000;
  // Explicit path (any order; sorted decreasing internally). Empty: the
  // default log-spaced path from lambda_max.
  std::vector<double> lambdas;
};

// Coordinate-descent solutions for one standardized design.
struct LassoPath {
  std::vector<std::string> features;
  std::vector<double> means, sds;  // sd 0 marks a constant column (never enters)
  double y_mean = 0.0;
  std::vector<double> lambdas;                    // decreasing
  std::vector<std::vector<double>> coefficients;  // standardized scale, per lambda

  // Original-scale model at path index k.
  LinearModel model(std::size_t k) const;
};

// lambda_max = max_j |<x_j, y - mean(y)>| / n over standardized columns.
double lasso_lambda_max(const FeatureTable& train);

// Minimizes (1/2n)|y - ybar - Xs b|^2 + lambda |b|_1 on standardized columns
// for each lambda, warm-starting along the (decreasing) sequence.
LassoPath lasso_path(const FeatureTable& train, const LassoControls& controls = {});

struct LassoCvTrace {
  std::vector<double> lambdas;
  std::vector<double> cv_mse;
  std::size_t chosen = 0;
};

// Path on the full data, K-fold CV error per lambda (fold fits reuse the
// full-data lambdas and standardize on their own rows), model at the minimum.
LinearModel fit_lasso(const FeatureTable& train, std::uint64_t seed, const LassoControls& controls = {},
                      LassoCvTrace* trace = nullptr);

struct ThresholdDummies {
  std::vector<double> near_small;  // distance < cutoff and size <= size cutoff
  std::vector<double> near_large;  // distance < cutoff and size > size cutoff
};

ThresholdDummies threshold_dummies(const FeatureTable& table, const std::string& distance_column,
                                   double cutoff, const std::string& size_column, double size_cutoff);

}  // namespace proxtree
