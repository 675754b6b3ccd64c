#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "proxtree/importance.hpp"
#include "proxtree/model.hpp"
#include "proxtree/table.hpp"

namespace proxtree {

// "start:stop:step" (inclusive of stop up to rounding) or "a,b,c". Grid
// points are start + i * step, so they are reproducible from the text.
std::vector<double> parse_grid(const std::string& text);

struct EffectCurve {
  std::string feature;
  std::vector<double> grid;
  double baseline = 0.0;
  std::size_t baseline_index = 0;
  // False for learners without a posterior: the band columns are NaN and the
  // effect is the plain difference of point predictions.
  bool has_bands = false;
  std::vector<double> pred_mean, pred_lo, pred_hi;
  std::vector<double> effect_mean, effect_lo, effect_hi;
};

// Predictions for `profile` (one row holding every model feature) with
// `feature` set to each grid value. With a posterior, effect draws are
// y_d(g) - y_d(baseline) within each draw d, summarized by their mean and
// [level/2, 1 - level/2] quantiles. The baseline must be a grid point.
EffectCurve sweep(const FittedModel& model, const FeatureTable& profile, const std::string& feature,
                  std::span<const double> grid, double baseline, double level = 0.05);

// CSV `grid,pred_mean,pred_lo,pred_hi,effect_mean,effect_lo,effect_hi`;
// missing bands are written as empty fields.
void write_curve_csv(std::ostream& out, const EffectCurve& curve);

// "attr=value" assignment applied to a profile. A column named exactly
// `attr` takes the number `value`; otherwise the one-hot block "attr=*" is
// set to the indicator of `value` (all zero for the reference level).
struct Override {
  std::string attribute;
  std::string value;
};
Override parse_override(const std::string& text);
void apply_override(FeatureTable& profile, const Override& o);

struct ProfilePair {
  std::string row_id;
  double local_importance = 0.0;
  FeatureTable selected;    // the chosen test row
  FeatureTable comparison;  // the same row after the overrides
};

// Picks the row of `test` whose local importance for `feature` is largest.
// Ties, including an all-zero column, go to the earliest row of the matrix.
ProfilePair pick_profile(const LocalMatrix& local, const FeatureTable& test, const std::string& feature,
                         std::span<const Override> overrides);

}  // namespace proxtree
