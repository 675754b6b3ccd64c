#include "proxtree/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "proxtree/controls_json.hpp"
#include "proxtree/dataset.hpp"
#include "proxtree/effects.hpp"
#include "proxtree/errors.hpp"
#include "proxtree/importance.hpp"
#include "proxtree/log.hpp"
#include "proxtree/model.hpp"
#include "proxtree/parallel.hpp"
#include "proxtree/simulation.hpp"
#include "proxtree/stats.hpp"

#ifndef PROXTREE_VERSION
#define PROXTREE_VERSION "0.0.0"
#endif

namespace proxtree {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  return sha256_hex({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

// One manifest.json per output directory: what ran, on which inputs, and
// what it wrote.
class RunManifest {
 public:
  RunManifest(const std::string& command, const std::vector<std::string>& args, fs::path dir)
      : dir_(std::move(dir)) {
    j_["tool"] = "proxtree";
    j_["version"] = PROXTREE_VERSION;
    j_["command"] = command;
    j_["arguments"] = args;
    j_["started_at"] = utc_now();
    j_["config"] = json::object();
    j_["seeds"] = json::object();
    j_["inputs"] = json::object();
    j_["outputs"] = json::object();
    j_["results"] = json::object();
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw InputError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  void input(const std::string& role, const std::string& path) {
    j_["inputs"][role] = {{"path", path}, {"sha256", sha256_file(path)}};
  }
  void seed(const std::string& name, std::uint64_t value) { j_["seeds"][name] = value; }
  json& config() { return j_["config"]; }
  json& results() { return j_["results"]; }

  void output(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out) throw InputError("cannot write '" + p.string() + "'");
    j_["outputs"][name] = sha256_hex(content);
  }

  void finish() {
    j_["finished_at"] = utc_now();
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    out << j_.dump(2) << '\n';
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  json j_;
};

std::string table_csv(const FeatureTable& t) {
  std::ostringstream s;
  write_feature_table(s, t);
  return s.str();
}

std::optional<std::string> opt(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<std::string>(s);
}

struct Common {
  std::vector<std::string> args;
  std::ostream* out = nullptr;
};

// featurize -----------------------------------------------------------------

struct FeaturizeArgs {
  std::string respondents, events, gazetteer, schema, outcome, scale = "km", out;
  int k = 3;
  bool impute = false, lenient = false;
};

void cmd_featurize(const FeaturizeArgs& a, const Common& c) {
  RunManifest m("featurize", c.args, a.out);
  m.input("respondents", a.respondents);
  m.input("events", a.events);
  Schema schema;
  if (!a.schema.empty()) {
    m.input("schema", a.schema);
    schema = load_schema(a.schema);
  }
  if (!a.outcome.empty()) schema.outcome = a.outcome;
  Gazetteer gazetteer;
  if (!a.gazetteer.empty()) {
    m.input("gazetteer", a.gazetteer);
    gazetteer = load_gazetteer(a.gazetteer);
  }
  const DistanceScale scale = parse_distance_scale(a.scale);
  LoadOptions lo;
  lo.strict = !a.lenient;
  lo.missing = a.impute ? MissingPolicy::impute : MissingPolicy::reject;

  auto obs = load_observations(a.respondents, schema, a.gazetteer.empty() ? nullptr : &gazetteer, lo);
  for (const auto& d : obs.dropped) warn(a.respondents + ":" + std::to_string(d.line) + ": dropped, " + d.message);
  const auto events = load_events(a.events);
  auto table = featurize(obs.points, events, a.k, scale);
  const auto encoder = Encoder::fit(obs.attributes, schema);
  if (a.impute) impute_missing(obs.attributes, encoder);
  encoder.encode_into(obs.attributes, table);
  if (obs.outcome) table.set_outcome(*obs.outcome, *schema.outcome);
  table.validate();

  m.config() = {{"k", a.k},
                {"scale", to_string(scale)},
                {"strict", !a.lenient},
                {"missing", a.impute ? "impute" : "reject"},
                {"outcome", schema.outcome ? json(*schema.outcome) : json()}};
  m.output("features.csv", table_csv(table));
  m.results() = {{"rows", table.rows()}, {"columns", table.cols()}, {"dropped_rows", obs.dropped.size()}};
  m.finish();
  *c.out << "features: " << table.rows() << " rows x " << table.cols() << " columns -> "
         << (m.dir() / "features.csv").string() << '\n';
}

// split ---------------------------------------------------------------------

struct SplitArgs {
  std::string input, outcome, out;
  double train_fraction = 0.5;
  std::size_t train_count = 0;
  std::uint64_t seed = 1;
};

void cmd_split(const SplitArgs& a, const Common& c) {
  RunManifest m("split", c.args, a.out);
  m.input("input", a.input);
  const auto table = read_feature_table(a.input, opt(a.outcome));
  SplitSpec spec;
  spec.train_fraction = a.train_fraction;
  if (a.train_count > 0) spec.train_count = a.train_count;
  spec.seed = a.seed;
  const auto [train, test] = split(table, spec);
  m.seed("seed", a.seed);
  m.config() = {{"train_fraction", a.train_fraction},
                {"train_count", spec.train_count ? json(*spec.train_count) : json()}};
  m.output("train.csv", table_csv(train));
  m.output("test.csv", table_csv(test));
  m.results() = {{"train_rows", train.rows()}, {"test_rows", test.rows()}};
  m.finish();
  *c.out << "split: " << train.rows() << " train, " << test.rows() << " test\n";
}

// fit -----------------------------------------------------------------------

struct FitArgs {
  std::string model, train, test, outcome, config, out;
  std::vector<std::string> exclude;
  std::uint64_t seed = 1;
  std::optional<std::size_t> trees, max_splits, cv_folds, mtry, iterations, burn_in;
};

void reject_flag(bool given, const std::string& flag, const std::string& model) {
  if (given) throw ConfigError("--" + flag + " does not apply to --model " + model);
}

std::string predictions_csv(const FeatureTable& t, const std::vector<double>& pred, const DrawSummary* bands) {
  std::ostringstream s;
  s << (bands ? "id,prediction,pred_lo,pred_hi\n" : "id,prediction\n");
  for (std::size_t i = 0; i < t.rows(); ++i) {
    std::vector<std::string> fields{t.ids()[i], format_double(pred[i])};
    if (bands) {
      fields.push_back(format_double(bands->lower[i]));
      fields.push_back(format_double(bands->upper[i]));
    }
    write_csv_record(s, fields);
  }
  return s.str();
}

void cmd_fit(const FitArgs& a, const Common& c) {
  RunManifest m("fit", c.args, a.out);
  m.input("train", a.train);
  auto train = read_feature_table(a.train, opt(a.outcome));
  if (!train.has_outcome()) throw InputError(a.train + ": no outcome column (use --outcome)");
  if (!a.exclude.empty()) {
    std::vector<std::string> keep;
    for (const auto& name : a.exclude)
      if (!train.has_column(name)) throw ConfigError("--exclude: no column '" + name + "' in " + a.train);
    for (const auto& name : train.names())
      if (std::find(a.exclude.begin(), a.exclude.end(), name) == a.exclude.end()) keep.push_back(name);
    train = train.select_columns(keep);
  }
  std::optional<FeatureTable> test;
  if (!a.test.empty()) {
    m.input("test", a.test);
    test = read_feature_table(a.test, opt(a.outcome));
  }
  json cfg = json::object();
  if (!a.config.empty()) {
    m.input("config", a.config);
    cfg = read_json_file(a.config);
    if (!cfg.is_object()) throw ConfigError("config '" + a.config + "' must be a JSON object");
  }
  m.seed("seed", a.seed);

  FittedModel model;
  DrawSummary test_bands;
  std::vector<double> test_pred;
  std::vector<double> sigma;
  const std::string& kind = a.model;
  if (kind != "forest" && kind != "bart") reject_flag(a.trees.has_value(), "trees", kind);
  if (kind != "tree") reject_flag(a.max_splits.has_value(), "max-splits", kind);
  if (kind != "tree" && kind != "lasso") reject_flag(a.cv_folds.has_value(), "cv-folds", kind);
  if (kind != "forest") reject_flag(a.mtry.has_value(), "mtry", kind);
  if (kind != "bart") {
    reject_flag(a.iterations.has_value(), "iterations", kind);
    reject_flag(a.burn_in.has_value(), "burn-in", kind);
  }

  if (kind == "ols") {
    if (!cfg.empty()) throw ConfigError("ols takes no configuration");
    model = fit_ols(train);
  } else if (kind == "lasso") {
    auto lc = lasso_controls_from_json(cfg);
    if (a.cv_folds) lc.folds = *a.cv_folds;
    m.config() = to_json(lc);
    model = fit_lasso(train, a.seed, lc);
  } else if (kind == "tree") {
    std::size_t folds = 0;
    if (cfg.contains("cv_folds")) {
      if (!cfg["cv_folds"].is_number_unsigned()) throw ConfigError("cv_folds must be a non-negative integer");
      folds = cfg["cv_folds"].get<std::size_t>();
      cfg.erase("cv_folds");
    }
    auto tc = tree_controls_from_json(cfg);
    if (a.max_splits) tc.max_splits = *a.max_splits;
    if (a.cv_folds) folds = *a.cv_folds;
    m.config() = to_json(tc);
    m.config()["cv_folds"] = folds;
    model = folds > 0 ? fit_cv(train, folds, a.seed, tc) : grow(train, tc);
  } else if (kind == "forest") {
    auto fc = forest_controls_from_json(cfg);
    if (a.trees) fc.trees = *a.trees;
    if (a.mtry) fc.mtry = *a.mtry;
    m.config() = to_json(fc);
    model = fit_forest(train, fc, a.seed);
  } else if (kind == "bart") {
    auto bc = bart_controls_from_json(cfg);
    if (a.trees) bc.trees = *a.trees;
    if (a.iterations) bc.iterations = *a.iterations;
    if (a.burn_in) bc.burn_in = *a.burn_in;
    m.config() = to_json(bc);
    auto result = fit_bart(train, bc, a.seed, test ? &*test : nullptr);
    if (test) {
      test_bands = summarize_draws(result.query_draws, result.model.draws());
      test_pred = test_bands.mean;
    }
    sigma = result.model.sigma_draws();
    model = std::move(result.model);
  } else {
    throw ConfigError("unknown model '" + kind + "'");
  }
  m.config()["model"] = kind;
  m.config()["exclude"] = a.exclude;

  std::ostringstream js;
  js << model.to_json().dump() << '\n';
  m.output("model.json", js.str());
  const double train_mse = mse(train.outcome(), model.predict(train));
  m.results()["train_mse"] = train_mse;
  *c.out << "train_mse " << format_double(train_mse) << '\n';
  if (!sigma.empty()) {
    std::ostringstream s;
    s << "draw,sigma\n";
    for (std::size_t d = 0; d < sigma.size(); ++d) s << d << ',' << format_double(sigma[d]) << '\n';
    m.output("posterior_sigma.csv", s.str());
  }
  if (test) {
    if (test_pred.empty()) test_pred = model.predict(*test);
    m.output("predictions.csv", predictions_csv(*test, test_pred, model.has_draws() ? &test_bands : nullptr));
    if (test->has_outcome()) {
      const double test_mse = mse(test->outcome(), test_pred);
      m.results()["test_mse"] = test_mse;
      *c.out << "test_mse " << format_double(test_mse) << '\n';
    }
  }
  m.finish();
}

// importance ----------------------------------------------------------------

struct ImportanceArgs {
  std::string model, test, outcome, out;
  std::size_t permutations = 3;
  std::uint64_t seed = 1;
  bool local = false, per_indicator = false;
};

void cmd_importance(const ImportanceArgs& a, const Common& c) {
  RunManifest m("importance", c.args, a.out);
  m.input("model", a.model);
  m.input("test", a.test);
  const auto model = FittedModel::load(a.model);
  const auto test = read_feature_table(a.test, opt(a.outcome));
  if (!test.has_outcome()) throw InputError(a.test + ": no outcome column (use --outcome)");
  if (a.permutations == 1) warn("--k-perms 1: single-permutation estimates are noisier");
  ImportanceOptions o;
  o.permutations = a.permutations;
  o.seed = a.seed;
  o.local = a.local;
  o.per_indicator = a.per_indicator;
  const auto report = permutation_importance(model, test, o);
  m.seed("seed", a.seed);
  m.config() = {{"k_perms", a.permutations}, {"local", a.local}, {"per_indicator", a.per_indicator}};
  std::ostringstream s;
  write_importance_csv(s, report);
  m.output("importance.csv", s.str());
  if (a.local) {
    std::ostringstream l;
    write_local_csv(l, report);
    m.output("local.csv", l.str());
  }
  m.results()["mse_base"] = report.mse_base;
  m.finish();
  *c.out << "mse_base " << format_double(report.mse_base) << '\n';
  for (std::size_t i : report.ranking())
    *c.out << report.entries[i].feature << ' ' << format_double(report.entries[i].importance_pct) << "%\n";
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
  std::string config, dgp, methods, out;
  std::optional<std::size_t> reps, n_train;
  std::optional<std::uint64_t> seed;
};

void cmd_simulate(const SimulateArgs& a, const Common& c) {
  RunManifest m("simulate", c.args, a.out);
  json cfg = json::object();
  if (!a.config.empty()) {
    m.input("config", a.config);
    cfg = read_json_file(a.config);
    if (!cfg.is_object()) throw ConfigError("config '" + a.config + "' must be a JSON object");
  }
  auto config = BenchmarkConfig::from_json(cfg);
  if (a.reps) config.reps = *a.reps;
  if (a.n_train) config.n_train = *a.n_train;
  if (a.seed) config.seed = *a.seed;
  if (!a.dgp.empty()) config.dgp = BenchmarkConfig::from_json({{"dgp", a.dgp}}).dgp;
  if (!a.methods.empty()) {
    config.methods.clear();
    std::istringstream in(a.methods);
    for (std::string t; std::getline(in, t, ',');) config.methods.push_back(t);
  }
  config.validate();
  if (config.gazetteer) m.input("gazetteer", *config.gazetteer);
  if (config.respondents) m.input("respondents", *config.respondents);
  m.config() = config.to_json();
  m.seed("seed", config.seed);

  const auto results = run_benchmark(config);
  std::ostringstream r;
  write_results_csv(r, results);
  m.output("results.csv", r.str());
  std::ostringstream s;
  s << "method,median_mse,reps\n";
  for (const auto& [method, med] : median_by_method(results)) {
    s << method << ',' << format_double(med) << ',' << config.reps << '\n';
    m.results()["median_mse"][method] = med;
    *c.out << method << ' ' << format_double(med) << '\n';
  }
  m.output("summary.csv", s.str());
  m.finish();
}

// effects -------------------------------------------------------------------

struct EffectsArgs {
  std::string model, profile, local, test, outcome, feature, grid = "0:1:0.1", out;
  std::optional<double> baseline;
  bool auto_profile = false;
  std::vector<std::string> overrides;
  double level = 0.05;
};

void cmd_effects(const EffectsArgs& a, const Common& c) {
  if (a.auto_profile == !a.profile.empty())
    throw ConfigError("give exactly one of --profile and --auto-profile");
  if (a.auto_profile && (a.local.empty() || a.test.empty()))
    throw ConfigError("--auto-profile needs --local (from importance --local) and --test");
  if (!a.baseline) throw ConfigError("--baseline is required");
  RunManifest m("effects", c.args, a.out);
  m.input("model", a.model);
  const auto model = FittedModel::load(a.model);
  std::vector<Override> overrides;
  for (const auto& o : a.overrides) overrides.push_back(parse_override(o));

  FeatureTable selected, comparison;
  json profile_info;
  if (a.auto_profile) {
    m.input("local", a.local);
    m.input("test", a.test);
    const auto test = read_feature_table(a.test, opt(a.outcome));
    const auto pick = pick_profile(read_local_csv(a.local), test, a.feature, overrides);
    selected = pick.selected;
    comparison = pick.comparison;
    profile_info = {{"row_id", pick.row_id}, {"local_importance", pick.local_importance}};
  } else {
    m.input("profile", a.profile);
    selected = read_feature_table(a.profile);
    selected.clear_outcome();
    if (selected.rows() != 1) throw InputError(a.profile + ": a profile file must have exactly one row");
    comparison = selected;
    for (const auto& o : overrides) apply_override(comparison, o);
    profile_info = {{"row_id", selected.ids().front()}};
  }
  const auto grid = parse_grid(a.grid);
  m.config() = {{"feature", a.feature},
                {"grid", a.grid},
                {"baseline", *a.baseline},
                {"level", a.level},
                {"overrides", a.overrides},
                {"profile", profile_info}};

  const auto curve = sweep(model, selected, a.feature, grid, *a.baseline, a.level);
  std::ostringstream s;
  write_curve_csv(s, curve);
  m.output("curve.csv", s.str());
  FeatureTable both(std::vector<std::string>{"selected"});
  if (!overrides.empty()) both = FeatureTable(std::vector<std::string>{"selected", "comparison"});
  for (const auto& name : model.features()) {
    std::vector<double> v{selected.column(name)[0]};
    if (!overrides.empty()) v.push_back(comparison.column(name)[0]);
    both.add_column(name, v);
  }
  m.output("profile.csv", table_csv(both));
  if (!overrides.empty()) {
    std::ostringstream s2;
    write_curve_csv(s2, sweep(model, comparison, a.feature, grid, *a.baseline, a.level));
    m.output("curve_comparison.csv", s2.str());
  }
  m.results()["points"] = grid.size();
  m.results()["bands"] = curve.has_bands;
  m.finish();
  *c.out << "effects: " << grid.size() << " grid points for " << a.feature << " -> "
         << (m.dir() / "curve.csv").string() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Proximity features and tree-based learners for geospatial outcome data", "proxtree"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", PROXTREE_VERSION);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0: all cores); results do not depend on it");

  FeaturizeArgs fa;
  auto* feat = app.add_subcommand("featurize", "Build proximity features from respondents and events");
  feat->add_option("--respondents", fa.respondents, "Observations CSV (id, lat/lon or zip, attributes)")
      ->required()
      ->check(CLI::ExistingFile);
  feat->add_option("--events", fa.events, "Events CSV (id,lat,lon,time,size[,flags])")->required()->check(CLI::ExistingFile);
  feat->add_option("--gazetteer", fa.gazetteer, "zip,lat,lon CSV for zip-only rows")->check(CLI::ExistingFile);
  feat->add_option("--schema", fa.schema, "JSON attribute schema")->check(CLI::ExistingFile);
  feat->add_option("--outcome", fa.outcome, "Outcome column of the respondents file");
  feat->add_option("--k", fa.k, "Events per ordering")->capture_default_str()->check(CLI::PositiveNumber);
  feat->add_option("--scale", fa.scale, "Distance unit")->capture_default_str()->check(CLI::IsMember({"km", "thousand-km"}));
  feat->add_flag("--impute", fa.impute, "Fill missing attributes (median / mode)");
  feat->add_flag("--lenient", fa.lenient, "Drop rows with unknown zips instead of failing");
  feat->add_option("--out", fa.out, "Output directory")->required();

  SplitArgs sa;
  auto* spl = app.add_subcommand("split", "Random train/test partition of a feature table");
  spl->add_option("--input", sa.input, "Feature table CSV")->required()->check(CLI::ExistingFile);
  spl->add_option("--outcome", sa.outcome, "Outcome column");
  spl->add_option("--train-fraction", sa.train_fraction, "Share of rows for training")->capture_default_str();
  spl->add_option("--train-count", sa.train_count, "Exact training size (overrides the fraction)");
  spl->add_option("--seed", sa.seed, "Seed")->capture_default_str();
  spl->add_option("--out", sa.out, "Output directory")->required();

  FitArgs fi;
  auto* fit = app.add_subcommand("fit", "Fit one learner");
  fit->add_option("--model", fi.model, "Learner")->required()->check(CLI::IsMember({"ols", "lasso", "tree", "forest", "bart"}));
  fit->add_option("--train", fi.train, "Training feature table")->required()->check(CLI::ExistingFile);
  fit->add_option("--test", fi.test, "Test feature table")->check(CLI::ExistingFile);
  fit->add_option("--outcome", fi.outcome, "Outcome column");
  fit->add_option("--config", fi.config, "JSON learner settings")->check(CLI::ExistingFile);
  fit->add_option("--exclude", fi.exclude, "Columns of the training table to leave out")->delimiter(',');
  fit->add_option("--seed", fi.seed, "Seed")->capture_default_str();
  fit->add_option("--trees", fi.trees, "Trees (forest, bart; default 200)");
  fit->add_option("--max-splits", fi.max_splits, "Split budget (tree)");
  fit->add_option("--cv-folds", fi.cv_folds, "Cross-validation folds (tree pruning, lasso)");
  fit->add_option("--mtry", fi.mtry, "Candidate columns per node (forest)");
  fit->add_option("--iterations", fi.iterations, "MCMC iterations including burn-in (bart)");
  fit->add_option("--burn-in", fi.burn_in, "Discarded MCMC iterations (bart)");
  fit->add_option("--out", fi.out, "Output directory")->required();

  ImportanceArgs ia;
  auto* imp = app.add_subcommand("importance", "Permutation importance on a test table");
  imp->add_option("--model", ia.model, "model.json from fit")->required()->check(CLI::ExistingFile);
  imp->add_option("--test", ia.test, "Test feature table")->required()->check(CLI::ExistingFile);
  imp->add_option("--outcome", ia.outcome, "Outcome column");
  imp->add_option("--k-perms", ia.permutations, "Permutations per feature (1 is allowed but noisier)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  imp->add_option("--seed", ia.seed, "Seed")->capture_default_str();
  imp->add_flag("--local", ia.local, "Also write the per-observation matrix");
  imp->add_flag("--per-indicator", ia.per_indicator, "Permute one-hot columns separately");
  imp->add_option("--out", ia.out, "Output directory")->required();

  SimulateArgs si;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo comparison of the learners");
  sim->add_option("--config", si.config, "JSON benchmark configuration")->check(CLI::ExistingFile);
  sim->add_option("--reps", si.reps, "Replications");
  sim->add_option("--n-train", si.n_train, "Training rows per replication");
  sim->add_option("--dgp", si.dgp, "linear or complex")->check(CLI::IsMember({"linear", "complex"}));
  sim->add_option("--methods", si.methods, "Comma-separated method list");
  sim->add_option("--seed", si.seed, "Master seed");
  sim->add_option("--out", si.out, "Output directory")->required();

  EffectsArgs ea;
  auto* eff = app.add_subcommand("effects", "Effect curve of one feature for a profile");
  eff->add_option("--model", ea.model, "model.json from fit")->required()->check(CLI::ExistingFile);
  eff->add_option("--profile", ea.profile, "One-row feature table")->check(CLI::ExistingFile);
  eff->add_flag("--auto-profile", ea.auto_profile, "Use the test row with the largest local importance");
  eff->add_option("--local", ea.local, "local.csv from importance --local")->check(CLI::ExistingFile);
  eff->add_option("--test", ea.test, "The test table the local matrix was computed on")->check(CLI::ExistingFile);
  eff->add_option("--outcome", ea.outcome, "Outcome column of the test table");
  eff->add_option("--feature", ea.feature, "Swept feature")->required();
  eff->add_option("--grid", ea.grid, "start:stop:step or a comma list")->capture_default_str();
  eff->add_option("--baseline", ea.baseline, "Grid value the effects are measured from")->required();
  eff->add_option("--override", ea.overrides, "attr=value for the comparison profile (repeatable)");
  eff->add_option("--level", ea.level, "Band level (0.05: 95% bands)")->capture_default_str();
  eff->add_option("--out", ea.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  auto previous = set_warning_sink([&err](const std::string& msg) { err << "warning: " << msg << '\n'; });
  set_thread_limit(threads);
  int code = 0;
  try {
    Common c{args, &out};
    if (*feat) cmd_featurize(fa, c);
    else if (*spl) cmd_split(sa, c);
    else if (*fit) cmd_fit(fi, c);
    else if (*imp) cmd_importance(ia, c);
    else if (*sim) cmd_simulate(si, c);
    else if (*eff) cmd_effects(ea, c);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    code = e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = 1;
  }
  set_thread_limit(0);
  set_warning_sink(previous);
  return code;
}

}  // namespace proxtree
