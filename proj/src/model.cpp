#include "proxtree/model.hpp"

#include <fstream>

#include "proxtree/errors.hpp"

namespace proxtree {

using nlohmann::json;

namespace {

template <class... F>
struct overloaded : F... {
  using F::operator()...;
};
template <class... F>
overloaded(F...) -> overloaded<F...>;

}  // namespace

std::string FittedModel::kind() const {
  return std::visit(overloaded{[](const LinearModel& m) { return m.method; },
                               [](const RegressionTree&) { return std::string("tree"); },
                               [](const ForestModel&) { return std::string("forest"); },
                               [](const BartModel&) { return std::string("bart"); }},
                    model_);
}

const std::vector<std::string>& FittedModel::features() const {
  return std::visit(
      overloaded{[](const LinearModel& m) -> const std::vector<std::string>& { return m.features; },
                 [](const auto& m) -> const std::vector<std::string>& { return m.features(); }},
      model_);
}

std::vector<double> FittedModel::predict(const FeatureTable& table) const {
  return std::visit(overloaded{[&](const BartModel& m) { return m.predict_mean(table); },
                               [&](const auto& m) { return m.predict(table); }},
                    model_);
}

std::vector<double> FittedModel::predict_replaced(const FeatureTable& table, std::span<const std::size_t> features,
                                                  std::span<const std::vector<double>> replacement,
                                                  std::span<const double> base) const {
  if (features.size() != replacement.size()) throw ConfigError("replacement count does not match feature count");
  if (const auto* bart = std::get_if<BartModel>(&model_))
    return bart->predict_mean_replaced(table, features, replacement, base);
  FeatureTable changed = table;
  const auto& names = this->features();
  for (std::size_t r = 0; r < features.size(); ++r) changed.set_column(names.at(features[r]), replacement[r]);
  return predict(changed);
}

std::vector<double> FittedModel::predict_draws(const FeatureTable& table, std::size_t* draw_count) const {
  const auto* bart = std::get_if<BartModel>(&model_);
  if (!bart) throw ConfigError("a " + kind() + " model has no posterior draws");
  if (draw_count) *draw_count = bart->draws();
  return bart->predict_draws(table);
}

json FittedModel::to_json() const {
  json j;
  j["kind"] = kind();
  j["model"] = std::visit([](const auto& m) { return m.to_json(); }, model_);
  return j;
}

FittedModel FittedModel::from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.contains("model"))
    throw InputError("model file lacks \"kind\" or \"model\"");
  const std::string kind = j["kind"].is_string() ? j["kind"].get<std::string>() : "";
  const json& m = j["model"];
  if (kind == "ols" || kind == "lasso") {
    auto lm = LinearModel::from_json(m);
    if (lm.method != kind) throw InputError("model kind '" + kind + "' disagrees with its body");
    return FittedModel(std::move(lm));
  }
  if (kind == "tree") return FittedModel(RegressionTree::from_json(m));
  if (kind == "forest") return FittedModel(ForestModel::from_json(m));
  if (kind == "bart") return FittedModel(BartModel::from_json(m));
  throw InputError("unknown model kind '" + kind + "'");
}

void FittedModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << to_json().dump() << '\n';
  if (!out) throw InputError("failed writing " + path.string());
}

FittedModel FittedModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read model file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace proxtree
