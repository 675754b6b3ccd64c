#include "proxtree/effects.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "proxtree/bart.hpp"
#include "proxtree/csv.hpp"
#include "proxtree/errors.hpp"
#include "proxtree/log.hpp"
#include "proxtree/stats.hpp"

namespace proxtree {

namespace {

double grid_number(const std::string& text, const std::string& whole) {
  const auto v = parse_number(text);
  if (!v || !std::isfinite(*v)) throw ConfigError("grid '" + whole + "': '" + text + "' is not a finite number");
  return *v;
}

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) out.push_back(part);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

std::string format(double v) { return std::isnan(v) ? std::string() : format_double(v); }

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
  if (text.empty()) throw ConfigError("empty grid");
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    const auto parts = split_on(text, ':');
    if (parts.size() != 3) throw ConfigError("grid '" + text + "' must be start:stop:step");
    const double start = grid_number(parts[0], text);
    const double stop = grid_number(parts[1], text);
    const double step = grid_number(parts[2], text);
    if (!(step > 0.0) || stop < start) throw ConfigError("grid '" + text + "' needs step > 0 and stop >= start");
    const double count = std::floor((stop - start) / step + 1e-9);
    if (count > 1e6) throw ConfigError("grid '" + text + "' has too many points");
    for (std::size_t i = 0; i <= static_cast<std::size_t>(count); ++i)
      grid.push_back(start + static_cast<double>(i) * step);
  } else {
    for (const auto& p : split_on(text, ',')) grid.push_back(grid_number(p, text));
  }
  return grid;
}

EffectCurve sweep(const FittedModel& model, const FeatureTable& profile, const std::string& feature,
                  std::span<const double> grid, double baseline, double level) {
  if (profile.rows() != 1) throw InputError("a profile must have exactly one row");
  if (grid.empty()) throw ConfigError("empty grid");
  for (double g : grid)
    if (!std::isfinite(g)) throw ConfigError("grid values must be finite");
  const auto& features = model.features();
  if (std::find(features.begin(), features.end(), feature) == features.end())
    throw ConfigError("'" + feature + "' is not a model feature");

  EffectCurve c;
  c.feature = feature;
  c.grid.assign(grid.begin(), grid.end());
  c.baseline = baseline;
  const double tol = 1e-9 * std::max(1.0, std::abs(baseline));
  bool found = false;
  for (std::size_t i = 0; i < grid.size() && !found; ++i)
    if (std::abs(grid[i] - baseline) <= tol) c.baseline_index = i, found = true;
  if (!found) throw ConfigError("baseline " + format(baseline) + " is not a grid point");

  const std::size_t G = grid.size();
  FeatureTable rows(std::vector<std::string>(G, profile.ids().front()));
  for (const auto& name : features) {
    if (name == feature) {
      rows.add_column(name, c.grid);
    } else {
      rows.add_column(name, std::vector<double>(G, profile.column(name)[0]));
    }
  }
  rows.validate();

  const std::size_t b = c.baseline_index;
  if (!model.has_draws()) {
    warn("model '" + model.kind() + "' has no posterior; the effect curve has no bands");
    c.pred_mean = model.predict(rows);
    c.effect_mean.resize(G);
    for (std::size_t i = 0; i < G; ++i) c.effect_mean[i] = c.pred_mean[i] - c.pred_mean[b];
    const double nan = std::numeric_limits<double>::quiet_NaN();
    c.pred_lo = c.pred_hi = c.effect_lo = c.effect_hi = std::vector<double>(G, nan);
    return c;
  }

  std::size_t D = 0;
  const auto draws = model.predict_draws(rows, &D);
  std::vector<double> effects(draws.size());
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t i = 0; i < G; ++i) effects[d * G + i] = draws[d * G + i] - draws[d * G + b];
  auto pred = summarize_draws(draws, D, level);
  auto eff = summarize_draws(effects, D, level);
  c.has_bands = true;
  c.pred_mean = std::move(pred.mean);
  c.pred_lo = std::move(pred.lower);
  c.pred_hi = std::move(pred.upper);
  c.effect_mean = std::move(eff.mean);
  c.effect_lo = std::move(eff.lower);
  c.effect_hi = std::move(eff.upper);
  return c;
}

void write_curve_csv(std::ostream& out, const EffectCurve& c) {
  out << "grid,pred_mean,pred_lo,pred_hi,effect_mean,effect_lo,effect_hi\n";
  for (std::size_t i = 0; i < c.grid.size(); ++i)
    out << format(c.grid[i]) << ',' << format(c.pred_mean[i]) << ',' << format(c.pred_lo[i]) << ','
        << format(c.pred_hi[i]) << ',' << format(c.effect_mean[i]) << ',' << format(c.effect_lo[i]) << ','
        << format(c.effect_hi[i]) << '\n';
}

Override parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
    throw ConfigError("override '" + text + "' must look like attribute=value");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

void apply_override(FeatureTable& profile, const Override& o) {
  if (auto j = profile.find_column(o.attribute)) {
    const auto v = parse_number(o.value);
    if (!v || !std::isfinite(*v))
      throw ConfigError("override " + o.attribute + "=" + o.value + ": numeric column needs a number");
    for (double& x : profile.mutable_column(*j)) x = *v;
    return;
  }
  const std::string prefix = o.attribute + "=";
  bool block = false, level = false;
  for (std::size_t j = 0; j < profile.cols(); ++j) {
    const auto& name = profile.name(j);
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    block = true;
    const bool on = name.substr(prefix.size()) == o.value;
    level = level || on;
    for (double& x : profile.mutable_column(j)) x = on ? 1.0 : 0.0;
  }
  if (!block) throw ConfigError("override: no column '" + o.attribute + "' or block '" + prefix + "*'");
  if (!level) warn("override " + o.attribute + "=" + o.value + " has no indicator column; using the reference level");
}

ProfilePair pick_profile(const LocalMatrix& local, const FeatureTable& test, const std::string& feature,
                         std::span<const Override> overrides) {
  const auto it = std::find(local.features.begin(), local.features.end(), feature);
  if (it == local.features.end()) throw ConfigError("'" + feature + "' is not a column of the local importance matrix");
  if (local.row_ids.empty()) throw InputError("the local importance matrix has no rows");
  const std::size_t f = static_cast<std::size_t>(it - local.features.begin());
  const std::size_t width = local.features.size();
  std::size_t best = 0;
  for (std::size_t r = 1; r < local.row_ids.size(); ++r)
    if (local.values[r * width + f] > local.values[best * width + f]) best = r;

  ProfilePair p;
  p.row_id = local.row_ids[best];
  p.local_importance = local.values[best * width + f];
  const auto& ids = test.ids();
  const auto row = std::find(ids.begin(), ids.end(), p.row_id);
  if (row == ids.end()) throw InputError("row '" + p.row_id + "' of the local matrix is not in the test table");
  const std::size_t index = static_cast<std::size_t>(row - ids.begin());
  p.selected = test.select_rows(std::span<const std::size_t>(&index, 1));
  p.selected.clear_outcome();
  p.comparison = p.selected;
  for (const auto& o : overrides) apply_override(p.comparison, o);
  return p;
}

}  // namespace proxtree
