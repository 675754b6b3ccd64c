#include "proxtree/controls_json.hpp"

#include <set>
#include <string>

#include "proxtree/errors.hpp"

namespace proxtree {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& what, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(what + " settings must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError("unknown " + what + " setting '" + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(what + " setting '" + key + "' has the wrong type");
  }
}

}  // namespace

json to_json(const TreeControls& c) {
  json j{{"min_split", c.min_split}, {"min_leaf", c.min_leaf}, {"cp", c.cp}};
  j["max_splits"] = c.max_splits ? json(*c.max_splits) : json(nullptr);
  return j;
}

json to_json(const ForestControls& c) {
  json j{{"trees", c.trees}, {"bootstrap", c.bootstrap}, {"tree", to_json(c.tree)}};
  j["mtry"] = c.mtry ? json(*c.mtry) : json(nullptr);
  return j;
}

json to_json(const BartControls& c) {
  return json{{"trees", c.trees},
              {"iterations", c.iterations},
              {"burn_in", c.burn_in},
              {"thin", c.thin},
              {"chains", c.chains},
              {"min_leaf", c.min_leaf},
              {"max_cuts", c.max_cuts},
              {"alpha", c.hyper.alpha},
              {"beta", c.hyper.beta},
              {"k", c.hyper.k},
              {"nu", c.hyper.nu},
              {"q", c.hyper.q},
              {"moves", c.moves}};
}

json to_json(const LassoControls& c) {
  return json{{"path_length", c.path_length}, {"min_ratio", c.min_ratio}, {"folds", c.folds},
              {"tolerance", c.tolerance},     {"max_sweeps", c.max_sweeps}, {"lambdas", c.lambdas}};
}

TreeControls tree_controls_from_json(const json& j, TreeControls c) {
  const std::string what = "tree";
  check_keys(j, what, {"min_split", "min_leaf", "cp", "max_splits"});
  read(j, "min_split", c.min_split, what);
  read(j, "min_leaf", c.min_leaf, what);
  read(j, "cp", c.cp, what);
  if (j.contains("max_splits")) {
    if (j["max_splits"].is_null())
      c.max_splits.reset();
    else {
      std::size_t m = 0;
      read(j, "max_splits", m, what);
      c.max_splits = m;
    }
  }
  c.validate();
  return c;
}

ForestControls forest_controls_from_json(const json& j, ForestControls c) {
  const std::string what = "forest";
  check_keys(j, what, {"trees", "mtry", "bootstrap", "tree"});
  read(j, "trees", c.trees, what);
  read(j, "bootstrap", c.bootstrap, what);
  if (j.contains("mtry")) {
    if (j["mtry"].is_null())
      c.mtry.reset();
    else {
      std::size_t m = 0;
      read(j, "mtry", m, what);
      c.mtry = m;
    }
  }
  if (j.contains("tree")) c.tree = tree_controls_from_json(j["tree"], c.tree);
  if (c.trees < 1) throw ConfigError("forest needs at least one tree");
  return c;
}

BartControls bart_controls_from_json(const json& j, BartControls c) {
  const std::string what = "bart";
  check_keys(j, what, {"trees", "iterations", "burn_in", "thin", "chains", "min_leaf", "max_cuts", "alpha", "beta",
                       "k", "nu", "q", "moves"});
  read(j, "trees", c.trees, what);
  read(j, "iterations", c.iterations, what);
  read(j, "burn_in", c.burn_in, what);
  read(j, "thin", c.thin, what);
  read(j, "chains", c.chains, what);
  read(j, "min_leaf", c.min_leaf, what);
  read(j, "max_cuts", c.max_cuts, what);
  read(j, "alpha", c.hyper.alpha, what);
  read(j, "beta", c.hyper.beta, what);
  read(j, "k", c.hyper.k, what);
  read(j, "nu", c.hyper.nu, what);
  read(j, "q", c.hyper.q, what);
  read(j, "moves", c.moves, what);
  c.validate();
  return c;
}

LassoControls lasso_controls_from_json(const json& j, LassoControls c) {
  const std::string what = "lasso";
  check_keys(j, what, {"path_length", "min_ratio", "folds", "tolerance", "max_sweeps", "lambdas"});
  read(j, "path_length", c.path_length, what);
  read(j, "min_ratio", c.min_ratio, what);
  read(j, "folds", c.folds, what);
  read(j, "tolerance", c.tolerance, what);
  read(j, "max_sweeps", c.max_sweeps, what);
  read(j, "lambdas", c.lambdas, what);
  return c;
}

}  // namespace proxtree
