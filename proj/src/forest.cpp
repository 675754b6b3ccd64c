#include "proxtree/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "proxtree/errors.hpp"
#include "proxtree/log.hpp"
#include "proxtree/parallel.hpp"
#include "proxtree/random.hpp"

namespace proxtree {

using nlohmann::json;

ForestModel fit_forest(const FeatureTable& train, const ForestControls& controls, std::uint64_t seed) {
  if (!train.has_outcome()) throw InputError("training table has no outcome column");
  const std::size_t n = train.rows();
  const std::size_t p = train.cols();
  if (n == 0) throw InputError("training table is empty");
  if (p == 0) throw ConfigError("forest needs at least one feature column");
  if (controls.trees == 0) throw ConfigError("forest needs at least one tree");
  const std::size_t mtry = controls.mtry.value_or(std::max<std::size_t>(1, p / 3));
  if (mtry < 1 || mtry > p)
    throw ConfigError("mtry " + std::to_string(mtry) + " must lie in [1, " + std::to_string(p) + "]");
  controls.tree.validate();

  std::vector<const double*> cols(p);
  for (std::size_t j = 0; j < p; ++j) cols[j] = train.column(j).data();
  const auto y = train.outcome();

  ForestModel model;
  model.features_ = train.names();
  model.mtry_ = mtry;
  model.seed_ = seed;
  model.n_train_ = n;
  model.bootstrap_ = controls.bootstrap;
  model.trees_.resize(controls.trees);
  model.bags_.resize(controls.trees);

  parallel_for(controls.trees, [&](std::size_t b) {
    Rng rng = make_rng(seed, {b});
    std::vector<std::size_t> sample(n);
    if (controls.bootstrap) {
      for (auto& s : sample) s = uniform_index(n, rng);
      std::sort(sample.begin(), sample.end());
    } else {
      std::iota(sample.begin(), sample.end(), std::size_t{0});
    }
    GrowOptions opt;
    opt.controls = controls.tree;
    opt.mtry = mtry;
    opt.rng = &rng;
    model.trees_[b] = grow_rows(cols, train.names(), y, sample, opt);
    model.bags_[b].assign(sample.begin(), sample.end());
  });
  return model;
}

std::vector<double> ForestModel::predict_per_tree(const FeatureTable& table) const {
  const std::size_t n = table.rows();
  const std::size_t B = trees_.size();
  std::vector<const double*> cols(features_.size(), nullptr);
  for (const auto& t : trees_)
    for (std::size_t j : t.used_features())
      if (!cols[j]) cols[j] = table.column(table.column_index(features_[j])).data();
  std::vector<double> out(n * B);
  parallel_for(B, [&](std::size_t b) {
    for (std::size_t i = 0; i < n; ++i) out[i * B + b] = trees_[b].predict_one(cols, i);
  });
  return out;
}

std::vector<double> ForestModel::predict(const FeatureTable& table) const {
  const std::size_t B = trees_.size();
  const auto per_tree = predict_per_tree(table);
  std::vector<double> out(table.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t b = 0; b < B; ++b) s += per_tree[i * B + b];
    out[i] = s / static_cast<double>(B);
  }
  return out;
}

OobResult ForestModel::oob(const FeatureTable& train) const {
  if (!train.has_outcome()) throw InputError("OOB error needs the training outcome");
  if (train.rows() != n_train_)
    throw InputError("OOB error needs the " + std::to_string(n_train_) + "-row training table, got " +
                     std::to_string(train.rows()) + " rows");
  const std::size_t n = n_train_;
  const std::size_t B = trees_.size();
  const auto per_tree = predict_per_tree(train);
  std::vector<std::vector<char>> in_bag(B, std::vector<char>(n, 0));
  for (std::size_t b = 0; b < B; ++b)
    for (auto i : bags_[b]) in_bag[b][i] = 1;

  OobResult r;
  r.predictions.assign(n, std::numeric_limits<double>::quiet_NaN());
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    std::size_t k = 0;
    for (std::size_t b = 0; b < B; ++b)
      if (!in_bag[b][i]) {
        s += per_tree[i * B + b];
        ++k;
      }
    if (k == 0) {
      ++r.rows_excluded;
      continue;
    }
    r.predictions[i] = s / static_cast<double>(k);
    const double d = train.outcome()[i] - r.predictions[i];
    sse += d * d;
    ++r.rows_used;
  }
  if (r.rows_used == 0) throw NumericalError("no row is out of bag for any tree; OOB error undefined");
  if (r.rows_excluded > 0)
    warn(std::to_string(r.rows_excluded) + " row(s) are in every bootstrap sample and were left out of the OOB error");
  r.mse = sse / static_cast<double>(r.rows_used);
  return r;
}

double oob_mse(const ForestModel& model, const FeatureTable& train) { return model.oob(train).mse; }

json ForestModel::to_json() const {
  json trees = json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return json{{"features", features_}, {"trees_count", trees_.size()}, {"mtry", mtry_},
              {"seed", seed_},         {"training_rows", n_train_},   {"bootstrap", bootstrap_},
              {"bags", bags_},         {"trees", std::move(trees)}};
}

ForestModel ForestModel::from_json(const json& j) {
  ForestModel m;
  try {
    m.features_ = j.at("features").get<std::vector<std::string>>();
    m.mtry_ = j.at("mtry").get<std::size_t>();
    m.seed_ = j.at("seed").get<std::uint64_t>();
    m.n_train_ = j.at("training_rows").get<std::size_t>();
    m.bootstrap_ = j.value("bootstrap", true);
    m.bags_ = j.at("bags").get<std::vector<std::vector<std::uint32_t>>>();
    for (const auto& t : j.at("trees")) m.trees_.push_back(RegressionTree::from_json(t));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed forest JSON: ") + e.what());
  }
  if (m.trees_.empty() || m.bags_.size() != m.trees_.size()) throw InputError("malformed forest JSON: tree/bag count");
  for (const auto& t : m.trees_)
    if (t.features() != m.features_) throw InputError("malformed forest JSON: tree feature list differs");
  return m;
}

}  // namespace proxtree
