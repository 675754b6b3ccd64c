#include "proxtree/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "proxtree/cart.hpp"
#include "proxtree/controls_json.hpp"
#include "proxtree/csv.hpp"
#include "proxtree/errors.hpp"
#include "proxtree/importance.hpp"
#include "proxtree/linear.hpp"
#include "proxtree/parallel.hpp"
#include "proxtree/random.hpp"
#include "proxtree/stats.hpp"

namespace proxtree {

using nlohmann::json;

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Index drawn from unnormalized weights by inverting the cumulative sum.
template <std::size_t N>
std::size_t categorical_draw(const std::array<double, N>& w, Rng& rng) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  const double u = uniform(rng, 0.0, total);
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  for (std::size_t i = N; i-- > 0;)
    if (w[i] > 0.0) return i;
  return N - 1;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double discretize(double v, const DgpSpec& s) { return std::clamp(std::round(v), s.outcome_min, s.outcome_max); }

template <class T>
void read_key(const json& j, const char* key, T& out, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(what + " setting '" + key + "' has the wrong type");
  }
}

}  // namespace

Gazetteer synthetic_gazetteer(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("synthetic gazetteer needs at least one entry");
  if (count > 99999) throw ConfigError("synthetic gazetteer is limited to 99999 zips");
  Rng rng = make_rng(seed, {0x9a2});
  Gazetteer g;
  for (std::size_t i = 1; i <= count; ++i) {
    const double lat = uniform(rng, 25.0, 49.0);
    const double lon = uniform(rng, -124.0, -67.0);
    g.add(normalize_zip(std::to_string(i)), GeoPoint::normalized(lat, lon));
  }
  return g;
}

void Marginals::validate() const {
  if (!(female >= 0.0 && female <= 1.0)) throw ConfigError("P(female) must lie in [0, 1]");
  if (age_min > age_max) throw ConfigError("age_min exceeds age_max");
  auto check = [](const auto& w, const char* what) {
    double total = 0.0;
    for (double v : w) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " weights must be >= 0");
      total += v;
    }
    if (!(total > 0.0)) throw ConfigError(std::string(what) + " weights sum to zero");
  };
  check(education, "education");
  check(party, "party");
}

std::vector<Respondent> gen_population(std::size_t n, const Gazetteer& gazetteer, const Marginals& marginals,
                                       std::uint64_t seed) {
  if (gazetteer.empty()) throw InputError("gazetteer is empty");
  marginals.validate();
  Rng rng(seed);
  const auto& entries = gazetteer.entries();
  std::vector<Respondent> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = out[i];
    const auto& [zip, loc] = entries[uniform_index(entries.size(), rng)];
    r.zip = zip;
    r.point = {"p" + std::to_string(i + 1), loc};
    r.female = uniform(rng, 0.0, 1.0) < marginals.female ? 1.0 : 0.0;
    r.education = static_cast<double>(categorical_draw(marginals.education, rng) + 1);
    r.age = static_cast<double>(std::uniform_int_distribution<int>(marginals.age_min, marginals.age_max)(rng));
    r.party = static_cast<int>(categorical_draw(marginals.party, rng));
  }
  return out;
}

std::vector<Respondent> load_respondents(const std::filesystem::path& path, const Gazetteer& gazetteer) {
  const CsvData csv = read_csv(path);
  const auto c_zip = csv.find("zip");
  const auto c_lat = csv.find("lat");
  const auto c_lon = csv.find("lon");
  if (!c_zip && !(c_lat && c_lon)) throw InputError(path.string() + ": needs a zip column or lat and lon columns");
  const std::size_t c_female = csv.require("female"), c_edu = csv.require("education"), c_age = csv.require("age"),
                    c_party = csv.require("party");
  auto number = [&](std::size_t r, std::size_t c) {
    const auto v = parse_number(csv.records[r][c]);
    if (!v || !std::isfinite(*v))
      throw InputError(path.string() + ":" + std::to_string(csv.line[r]) + ": column '" + csv.header[c] +
                       "' needs a number, got '" + csv.records[r][c] + "'");
    return *v;
  };
  std::vector<Respondent> out;
  for (std::size_t r = 0; r < csv.records.size(); ++r) {
    const auto& rec = csv.records[r];
    Respondent p;
    p.point.id = "p" + std::to_string(r + 1);
    if (c_lat && c_lon && !is_missing(rec[*c_lat]) && !is_missing(rec[*c_lon])) {
      p.point.location = GeoPoint::normalized(number(r, *c_lat), number(r, *c_lon));
      if (c_zip) p.zip = normalize_zip(rec[*c_zip]);
    } else {
      const auto where = c_zip ? gazetteer.find(rec[*c_zip]) : std::nullopt;
      if (!where)
        throw InputError(path.string() + ":" + std::to_string(csv.line[r]) + ": unknown zip '" +
                         (c_zip ? rec[*c_zip] : std::string()) + "'");
      p.zip = normalize_zip(rec[*c_zip]);
      p.point.location = *where;
    }
    p.female = number(r, c_female);
    p.education = number(r, c_edu);
    p.age = number(r, c_age);
    const std::string& party = rec[c_party];
    if (party == "I" || party == "0") {
      p.party = 0;
    } else if (party == "D" || party == "1") {
      p.party = 1;
    } else if (party == "R" || party == "2") {
      p.party = 2;
    } else {
      throw InputError(path.string() + ":" + std::to_string(csv.line[r]) + ": party must be I, D or R, got '" +
                       party + "'");
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) throw InputError(path.string() + ": no respondents");
  return out;
}

std::vector<Respondent> resample_population(const std::vector<Respondent>& pool, std::size_t n, std::uint64_t seed) {
  if (pool.empty()) throw InputError("respondent pool is empty");
  Rng rng(seed);
  std::vector<Respondent> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = pool[uniform_index(pool.size(), rng)];
    out[i].point.id = "p" + std::to_string(i + 1);
  }
  return out;
}

EventCatalog gen_events(const Gazetteer& gazetteer, std::uint64_t seed, const EventDraw& draw) {
  if (gazetteer.size() < draw.count)
    throw InputError("gazetteer has " + std::to_string(gazetteer.size()) + " zips; " + std::to_string(draw.count) +
                     " distinct event locations are needed");
  if (!(draw.time_min >= 0.0 && draw.time_min <= draw.time_max && draw.size_min >= 0.0 &&
        draw.size_min <= draw.size_max))
    throw ConfigError("event time and size ranges must be nonnegative and ordered");
  Rng rng(seed);
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  std::vector<std::size_t> idx(gazetteer.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < draw.count; ++i) std::swap(idx[i], idx[i + uniform_index(idx.size() - i, rng)]);
  EventCatalog cat;
  for (std::size_t i = 0; i < draw.count; ++i) {
    Event e;
    e.id = static_cast<std::int64_t>(i + 1);
    e.location = gazetteer.entries()[idx[i]].second;
    e.time = uniform(rng, draw.time_min, draw.time_max);
    e.size = uniform(rng, draw.size_min, draw.size_max);
    cat.events.push_back(e);
  }
  return cat;
}

FeatureTable simulation_features(const std::vector<Respondent>& population, const EventCatalog& events,
                                 std::size_t extra, std::uint64_t seed) {
  std::vector<Observation> obs;
  obs.reserve(population.size());
  for (const auto& r : population) obs.push_back(r.point);
  const FeatureTable prox = featurize(obs, events, 3, DistanceScale::km);
  std::vector<std::string> keep;
  for (const char* stem : {"dist_near", "time_near", "size_near", "dist_recent", "dist_largest"})
    for (int j = 1; j <= 3; ++j) keep.push_back(stem + std::to_string(j));
  FeatureTable t = prox.select_columns(keep);
  const std::size_t n = population.size();
  std::vector<double> female(n), edu(n), age(n), dem(n), rep(n);
  for (std::size_t i = 0; i < n; ++i) {
    female[i] = population[i].female;
    edu[i] = population[i].education;
    age[i] = population[i].age;
    dem[i] = population[i].party == 1 ? 1.0 : 0.0;
    rep[i] = population[i].party == 2 ? 1.0 : 0.0;
  }
  t.add_column("female", std::move(female));
  t.add_column("education", std::move(edu));
  t.add_column("age", std::move(age));
  t.add_column("party=D", std::move(dem));
  t.add_column("party=R", std::move(rep));
  Rng rng(seed);
  for (std::size_t e = 1; e <= extra; ++e) {
    std::vector<double> col(n);
    for (auto& v : col) v = uniform(rng, 0.0, 1.0);
    t.add_column("noise" + std::to_string(e), std::move(col));
  }
  return t;
}

DgpSpec DgpSpec::default_linear() {
  DgpSpec s;
  s.kind = "linear";
  s.intercept = 2.0;
  s.linear = {{"dist_near1", -1.2, 1000.0},
              {"size_near1", 0.04, 1.0},
              {"party=D", 0.6, 1.0},
              {"party=R", -0.6, 1.0},
              {"age", 0.01, 1.0}};
  return s;
}

DgpSpec DgpSpec::default_complex() {
  DgpSpec s;
  s.kind = "complex";
  s.intercept = 2.0;
  s.linear = {{"size_near1", 0.04, 1.0}, {"party=D", 0.6, 1.0}, {"party=R", -0.6, 1.0}, {"age", 0.01, 1.0}};
  s.thresholds = {{"dist_near1", 200.0, 0.8, std::nullopt}, {"dist_near1", 200.0, 0.6, std::string("party=R")}};
  s.quadratic = {{"age", 45.0, -0.0005}};
  return s;
}

void DgpSpec::validate() const {
  if (kind == "linear") {
    if (!thresholds.empty() || !quadratic.empty())
      throw ConfigError("a linear DGP may only contain additive linear terms");
  } else if (kind == "complex") {
    const bool interaction = std::any_of(thresholds.begin(), thresholds.end(),
                                         [](const ThresholdTerm& t) { return t.interaction.has_value(); });
    const bool plain = std::any_of(thresholds.begin(), thresholds.end(),
                                   [](const ThresholdTerm& t) { return !t.interaction.has_value(); });
    if (!plain || !interaction || quadratic.empty())
      throw ConfigError(
          "a complex DGP needs a distance threshold, a threshold-by-attribute interaction, and a quadratic term");
  } else {
    throw ConfigError("DGP kind must be 'linear' or 'complex', got '" + kind + "'");
  }
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("noise_sd must be finite and >= 0");
  if (!(outcome_min <= outcome_max)) throw ConfigError("outcome_min exceeds outcome_max");
  for (const auto& t : linear)
    if (!(t.divisor != 0.0) || !std::isfinite(t.divisor)) throw ConfigError("linear term divisor must be nonzero");
}

std::vector<std::string> DgpSpec::columns() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& c) {
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  };
  for (const auto& t : linear) add(t.column);
  for (const auto& t : thresholds) {
    add(t.column);
    if (t.interaction) add(*t.interaction);
  }
  for (const auto& t : quadratic) add(t.column);
  return out;
}

json DgpSpec::to_json() const {
  json j{{"kind", kind},           {"intercept", intercept},     {"noise_sd", noise_sd},
         {"discretize", discretize}, {"outcome_min", outcome_min}, {"outcome_max", outcome_max}};
  j["linear"] = json::array();
  for (const auto& t : linear) j["linear"].push_back({{"column", t.column}, {"coef", t.coef}, {"divisor", t.divisor}});
  j["thresholds"] = json::array();
  for (const auto& t : thresholds) {
    json e{{"column", t.column}, {"cutoff", t.cutoff}, {"coef", t.coef}};
    e["interaction"] = t.interaction ? json(*t.interaction) : json(nullptr);
    j["thresholds"].push_back(e);
  }
  j["quadratic"] = json::array();
  for (const auto& t : quadratic)
    j["quadratic"].push_back({{"column", t.column}, {"center", t.center}, {"coef", t.coef}});
  return j;
}

DgpSpec DgpSpec::from_json(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "linear") return default_linear();
    if (name == "complex") return default_complex();
    throw ConfigError("unknown DGP '" + name + "'");
  }
  if (!j.is_object()) throw ConfigError("dgp must be \"linear\", \"complex\", or an object");
  DgpSpec s;
  s.linear.clear();
  const std::string what = "dgp";
  try {
    s.kind = j.at("kind").get<std::string>();
    read_key(j, "intercept", s.intercept, what);
    read_key(j, "noise_sd", s.noise_sd, what);
    read_key(j, "discretize", s.discretize, what);
    read_key(j, "outcome_min", s.outcome_min, what);
    read_key(j, "outcome_max", s.outcome_max, what);
    for (const auto& e : j.value("linear", json::array()))
      s.linear.push_back({e.at("column").get<std::string>(), e.at("coef").get<double>(), e.value("divisor", 1.0)});
    for (const auto& e : j.value("thresholds", json::array())) {
      ThresholdTerm t{e.at("column").get<std::string>(), e.at("cutoff").get<double>(), e.at("coef").get<double>(),
                      std::nullopt};
      if (e.contains("interaction") && !e["interaction"].is_null()) t.interaction = e["interaction"].get<std::string>();
      s.thresholds.push_back(t);
    }
    for (const auto& e : j.value("quadratic", json::array()))
      s.quadratic.push_back({e.at("column").get<std::string>(), e.at("center").get<double>(), e.at("coef").get<double>()});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed dgp specification: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<double> dgp_latent(const FeatureTable& table, const DgpSpec& spec) {
  spec.validate();
  std::vector<double> out(table.rows(), spec.intercept);
  auto col = [&](const std::string& name) { return table.column(table.column_index(name)); };
  for (const auto& t : spec.linear) {
    const auto c = col(t.column);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.coef * c[i] / t.divisor;
  }
  for (const auto& t : spec.thresholds) {
    const auto c = col(t.column);
    std::span<const double> inter;
    if (t.interaction) inter = col(*t.interaction);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (c[i] < t.cutoff) out[i] += t.coef * (t.interaction ? inter[i] : 1.0);
  }
  for (const auto& t : spec.quadratic) {
    const auto c = col(t.column);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.coef * (c[i] - t.center) * (c[i] - t.center);
  }
  return out;
}

std::vector<double> apply_dgp(const FeatureTable& table, const DgpSpec& spec, std::uint64_t seed) {
  auto y = dgp_latent(table, spec);
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto& v : y) {
    if (spec.noise_sd > 0.0) v += spec.noise_sd * noise(rng);
    if (spec.discretize) v = discretize(v, spec);
  }
  return y;
}

std::vector<double> dgp_conditional_mean(const FeatureTable& table, const DgpSpec& spec) {
  auto mu = dgp_latent(table, spec);
  if (!spec.discretize) return mu;
  const double lo = std::round(spec.outcome_min), hi = std::round(spec.outcome_max);
  for (auto& m : mu) {
    if (spec.noise_sd == 0.0) {
      m = discretize(m, spec);
      continue;
    }
    // Level v collects latent values in [v - 0.5, v + 0.5); the end levels
    // also collect the tails.
    double e = 0.0;
    for (double v = lo; v <= hi; v += 1.0) {
      const double upper = v == hi ? 1.0 : normal_cdf((v + 0.5 - m) / spec.noise_sd);
      const double lower = v == lo ? 0.0 : normal_cdf((v - 0.5 - m) / spec.noise_sd);
      e += v * (upper - lower);
    }
    m = e;
  }
  return mu;
}

const std::vector<std::string>& benchmark_methods() {
  static const std::vector<std::string> m{"ols_raw", "ols_dummy_wrong", "lasso", "tree_cv", "forest", "bart"};
  return m;
}

void BenchmarkConfig::validate() const {
  if (n_train < 10) throw ConfigError("n_train must be at least 10");
  if (reps < 1) throw ConfigError("reps must be at least 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (methods.empty()) throw ConfigError("no methods selected");
  for (const auto& m : methods)
    if (std::find(benchmark_methods().begin(), benchmark_methods().end(), m) == benchmark_methods().end())
      throw ConfigError("unknown method '" + m + "'");
  if (cv_folds < 2) throw ConfigError("cv_folds must be at least 2");
  if (!std::isfinite(dummy_cutoff) || !std::isfinite(dummy_size_cutoff))
    throw ConfigError("dummy cutoffs must be finite");
  dgp.validate();
  population.validate();
  bart.validate();
}

json BenchmarkConfig::to_json() const {
  json j;
  j["n_train"] = n_train;
  j["reps"] = reps;
  j["train_fraction"] = train_fraction;
  j["dgp"] = dgp.to_json();
  j["methods"] = methods;
  j["seed"] = seed;
  j["gazetteer"] = gazetteer ? json(*gazetteer) : json(nullptr);
  j["gazetteer_size"] = gazetteer_size;
  j["respondents"] = respondents ? json(*respondents) : json(nullptr);
  j["population"] = {{"female", population.female},
                     {"education", population.education},
                     {"age_min", population.age_min},
                     {"age_max", population.age_max},
                     {"party", population.party}};
  j["events"] = {{"count", events.count},       {"time_min", events.time_min}, {"time_max", events.time_max},
                 {"size_min", events.size_min}, {"size_max", events.size_max}};
  j["extra_features"] = extra_features;
  j["dummy_cutoff"] = dummy_cutoff;
  j["dummy_size_cutoff"] = dummy_size_cutoff;
  j["cv_folds"] = cv_folds;
  j["forest"] = proxtree::to_json(forest);
  j["bart"] = proxtree::to_json(bart);
  return j;
}

BenchmarkConfig BenchmarkConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("benchmark configuration must be a JSON object");
  static const std::vector<std::string> known{"n_train",      "reps",         "train_fraction", "dgp",
                                              "methods",      "seed",         "gazetteer",      "gazetteer_size", "respondents",
                                              "population",   "events",       "extra_features", "dummy_cutoff",
                                              "dummy_size_cutoff", "cv_folds", "forest",        "bart"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown benchmark setting '" + key + "'");
  BenchmarkConfig c;
  const std::string what = "benchmark";
  read_key(j, "n_train", c.n_train, what);
  read_key(j, "reps", c.reps, what);
  read_key(j, "train_fraction", c.train_fraction, what);
  if (j.contains("dgp")) c.dgp = DgpSpec::from_json(j["dgp"]);
  read_key(j, "methods", c.methods, what);
  read_key(j, "seed", c.seed, what);
  if (j.contains("gazetteer") && !j["gazetteer"].is_null()) {
    std::string g;
    read_key(j, "gazetteer", g, what);
    c.gazetteer = g;
  }
  read_key(j, "gazetteer_size", c.gazetteer_size, what);
  if (j.contains("respondents") && !j["respondents"].is_null()) {
    std::string r;
    read_key(j, "respondents", r, what);
    c.respondents = r;
  }
  if (j.contains("population")) {
    const auto& p = j["population"];
    read_key(p, "female", c.population.female, "population");
    read_key(p, "education", c.population.education, "population");
    read_key(p, "age_min", c.population.age_min, "population");
    read_key(p, "age_max", c.population.age_max, "population");
    read_key(p, "party", c.population.party, "population");
  }
  if (j.contains("events")) {
    const auto& e = j["events"];
    read_key(e, "count", c.events.count, "events");
    read_key(e, "time_min", c.events.time_min, "events");
    read_key(e, "time_max", c.events.time_max, "events");
    read_key(e, "size_min", c.events.size_min, "events");
    read_key(e, "size_max", c.events.size_max, "events");
  }
  read_key(j, "extra_features", c.extra_features, what);
  read_key(j, "dummy_cutoff", c.dummy_cutoff, what);
  read_key(j, "dummy_size_cutoff", c.dummy_size_cutoff, what);
  read_key(j, "cv_folds", c.cv_folds, what);
  if (j.contains("forest")) c.forest = forest_controls_from_json(j["forest"], c.forest);
  if (j.contains("bart")) c.bart = bart_controls_from_json(j["bart"], c.bart);
  c.validate();
  return c;
}

ReplicationData make_replication(const BenchmarkConfig& config, const Gazetteer& gazetteer, std::size_t rep,
                                 const std::vector<Respondent>* respondents) {
  ReplicationData d;
  d.seed = derive_seed(config.seed, {rep});
  const auto total = static_cast<std::size_t>(std::llround(static_cast<double>(config.n_train) / config.train_fraction));
  const auto population = respondents ? resample_population(*respondents, total, derive_seed(d.seed, {1}))
                                      : gen_population(total, gazetteer, config.population, derive_seed(d.seed, {1}));
  const auto events = gen_events(gazetteer, derive_seed(d.seed, {2}), config.events);
  FeatureTable table = simulation_features(population, events, config.extra_features, derive_seed(d.seed, {3}));
  table.set_outcome(apply_dgp(table, config.dgp, derive_seed(d.seed, {4})));
  SplitSpec split_spec;
  split_spec.train_count = config.n_train;
  split_spec.seed = derive_seed(d.seed, {5});
  std::tie(d.train, d.test) = split(table, split_spec);
  return d;
}

namespace {

// Raw distance columns replaced by near_small / near_large indicators built
// at the configured (wrong) cutoff. Indicators constant on the training rows
// are left out so the design stays full rank.
std::pair<FeatureTable, FeatureTable> dummy_design(const BenchmarkConfig& c, const ReplicationData& d) {
  auto build = [&](const FeatureTable& t) {
    std::vector<std::string> keep;
    for (const auto& name : t.names())
      if (name.rfind("dist_", 0) != 0) keep.push_back(name);
    FeatureTable out = t.select_columns(keep);
    auto dummies = threshold_dummies(t, "dist_near1", c.dummy_cutoff, "size_near1", c.dummy_size_cutoff);
    out.add_column("near_small", std::move(dummies.near_small));
    out.add_column("near_large", std::move(dummies.near_large));
    return out;
  };
  FeatureTable train = build(d.train), test = build(d.test);
  std::vector<std::string> keep;
  for (std::size_t j = 0; j < train.cols(); ++j) {
    const auto col = train.column(j);
    const bool constant = std::all_of(col.begin(), col.end(), [&](double v) { return v == col[0]; });
    if (!constant || train.name(j).rfind("near_", 0) != 0) keep.push_back(train.name(j));
  }
  return {train.select_columns(keep), test.select_columns(keep)};
}

// Keeps the first of any group of identical training columns (the k-th most
// recent and j-th largest event can be the same event in a replication).
std::pair<FeatureTable, FeatureTable> drop_duplicates(const FeatureTable& train, const FeatureTable& test) {
  std::vector<std::string> keep;
  std::vector<std::span<const double>> kept;
  for (std::size_t j = 0; j < train.cols(); ++j) {
    const auto col = train.column(j);
    const bool dup = std::any_of(kept.begin(), kept.end(),
                                 [&](std::span<const double> k) { return std::equal(k.begin(), k.end(), col.begin()); });
    if (dup) continue;
    keep.push_back(train.name(j));
    kept.push_back(col);
  }
  return {train.select_columns(keep), test.select_columns(keep)};
}

}  // namespace

double score_method(const std::string& method, const BenchmarkConfig& config, const ReplicationData& data) {
  const auto index = static_cast<std::size_t>(
      std::find(benchmark_methods().begin(), benchmark_methods().end(), method) - benchmark_methods().begin());
  if (index == benchmark_methods().size()) throw ConfigError("unknown method '" + method + "'");
  const std::uint64_t seed = derive_seed(data.seed, {100 + index});
  const auto y = data.test.outcome();
  std::vector<double> pred;
  if (method == "ols_raw") {
    const auto [train, test] = drop_duplicates(data.train, data.test);
    pred = fit_ols(train).predict(test);
  } else if (method == "ols_dummy_wrong") {
    const auto [dtrain, dtest] = dummy_design(config, data);
    const auto [train, test] = drop_duplicates(dtrain, dtest);
    pred = fit_ols(train).predict(test);
  } else if (method == "lasso") {
    LassoControls lc;
    lc.folds = config.cv_folds;
    pred = fit_lasso(data.train, seed, lc).predict(data.test);
  } else if (method == "tree_cv") {
    pred = fit_cv(data.train, config.cv_folds, seed).predict(data.test);
  } else if (method == "forest") {
    pred = fit_forest(data.train, config.forest, seed).predict(data.test);
  } else {
    const auto r = fit_bart(data.train, config.bart, seed, &data.test);
    pred = summarize_draws(r.query_draws, r.model.draws()).mean;
  }
  return mse(y, pred);
}

std::vector<ReplicationResult> run_benchmark(const BenchmarkConfig& config) {
  config.validate();
  const Gazetteer gazetteer = config.gazetteer ? load_gazetteer(*config.gazetteer)
                                               : synthetic_gazetteer(config.gazetteer_size, config.seed);
  std::vector<Respondent> pool;
  if (config.respondents) pool = load_respondents(*config.respondents, gazetteer);
  const std::size_t M = config.methods.size();
  std::vector<ReplicationResult> out(config.reps * M);
  parallel_for(config.reps, [&](std::size_t rep) {
    const ReplicationData data = make_replication(config, gazetteer, rep, pool.empty() ? nullptr : &pool);
    for (std::size_t m = 0; m < M; ++m)
      out[rep * M + m] = {rep, config.methods[m], score_method(config.methods[m], config, data), data.seed,
                          config.n_train};
  });
  return out;
}

void write_results_csv(std::ostream& out, const std::vector<ReplicationResult>& results) {
  write_csv_record(out, {"rep", "method", "mse", "seed"});
  for (const auto& r : results)
    write_csv_record(out, {std::to_string(r.rep), r.method, format_double(r.mse), std::to_string(r.seed)});
}

std::vector<std::pair<std::string, double>> median_by_method(const std::vector<ReplicationResult>& results) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> by;
  for (const auto& r : results) {
    if (!by.count(r.method)) order.push_back(r.method);
    by[r.method].push_back(r.mse);
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& m : order) out.emplace_back(m, median(by[m]));
  return out;
}

}  // namespace proxtree
