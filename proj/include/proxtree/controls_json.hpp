#pragma once

#include <json.hpp>

#include "proxtree/bart.hpp"
#include "proxtree/cart.hpp"
#include "proxtree/forest.hpp"
#include "proxtree/linear.hpp"

namespace proxtree {

// Learner settings <-> JSON objects. Readers start from `base` and override
// the keys present; unknown keys and wrongly typed values raise ConfigError.
nlohmann::json to_json(const TreeControls& c);
nlohmann::json to_json(const ForestControls& c);
nlohmann::json to_json(const BartControls& c);
nlohmann::json to_json(const LassoControls& c);

TreeControls tree_controls_from_json(const nlohmann::json& j, TreeControls base = {});
ForestControls forest_controls_from_json(const nlohmann::json& j, ForestControls base = {});
BartControls bart_controls_from_json(const nlohmann::json& j, BartControls base = {});
LassoControls lasso_controls_from_json(const nlohmann::json& j, LassoControls base = {});

}  // namespace proxtree
