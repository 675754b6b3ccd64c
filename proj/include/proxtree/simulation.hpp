#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxtree/bart.hpp"
#include "proxtree/dataset.hpp"
#include "proxtree/forest.hpp"
#include "proxtree/spatial.hpp"
#include "proxtree/table.hpp"

namespace proxtree {

// Zip centroids drawn uniformly over the box lat [25, 49], lon [-124, -67]
// (roughly the contiguous United States). Zips are "00001", "00002", ...
Gazetteer synthetic_gazetteer(std::size_t count, std::uint64_t seed);

struct Marginals {
  double female = 0.5;                                // P(female = 1)
  std::array<double, 4> education{0.3, 0.3, 0.25, 0.15};  // levels 1..4
  int age_min = 18;                                   // uniform integer age
  int age_max = 90;
  std::array<double, 3> party{0.3, 0.35, 0.35};       // I, D, R

  void validate() const;
};

struct Respondent {
  Observation point;
  std::string zip;
  double female = 0.0;
  double education = 1.0;
  double age = 18.0;
  int party = 0;  // 0 = I, 1 = D, 2 = R
};

std::vector<Respondent> gen_population(std::size_t n, const Gazetteer& gazetteer, const Marginals& marginals,
                                       std::uint64_t seed);

// Respondents from a CSV with columns zip (or lat,lon), female, education,
// age, party (I/D/R or 0/1/2). Zips are resolved through the gazetteer.
std::vector<Respondent> load_respondents(const std::filesystem::path& path, const Gazetteer& gazetteer);

// n rows drawn with replacement from `pool`.
std::vector<Respondent> resample_population(const std::vector<Respondent>& pool, std::size_t n, std::uint64_t seed);

struct EventDraw {
  std::size_t count = 15;
  double time_min = 0.0, time_max = 10.0;
  double size_min = 5.0, size_max = 30.0;
};

// Events at distinct gazetteer zips, ids 1..count.
EventCatalog gen_events(const Gazetteer& gazetteer, std::uint64_t seed, const EventDraw& draw = {});

// Modeling table for a population: dist/time/size of the 3 nearest events,
// distances to the 3 most recent and 3 largest (km), female, education, age,
// party=D, party=R, and `extra` irrelevant U(0, 1) columns noise1, noise2, ...
FeatureTable simulation_features(const std::vector<Respondent>& population, const EventCatalog& events,
                                 std::size_t extra, std::uint64_t seed);

struct LinearTerm {
  std::string column;
  double coef = 0.0;
  double divisor = 1.0;  // the term is coef * column / divisor
};

// coef * 1{column < cutoff} [* interaction column]
struct ThresholdTerm {
  std::string column;
  double cutoff = 0.0;
  double coef = 0.0;
  std::optional<std::string> interaction;
};

// coef * (column - center)^2
struct QuadraticTerm {
  std::string column;
  double center = 0.0;
  double coef = 0.0;
};

struct DgpSpec {
  std::string kind = "linear";  // "linear" or "complex"
  double intercept = 2.0;
  std::vector<LinearTerm> linear;
  std::vector<ThresholdTerm> thresholds;
  std::vector<QuadraticTerm> quadratic;
  double noise_sd = 0.5;
  bool discretize = true;  // round, then clamp to 0..4
  double outcome_min = 0.0;
  double outcome_max = 4.0;

  static DgpSpec default_linear();
  static DgpSpec default_complex();

  // Checks the structural requirements of each kind (ConfigError).
  void validate() const;
  std::vector<std::string> columns() const;

  nlohmann::json to_json() const;
  static DgpSpec from_json(const nlohmann::json& j);
};

// Noise-free latent value per row.
std::vector<double> dgp_latent(const FeatureTable& table, const DgpSpec& spec);
// Latent value plus N(0, noise_sd^2), discretized when the spec says so.
std::vector<double> apply_dgp(const FeatureTable& table, const DgpSpec& spec, std::uint64_t seed);
// E[outcome | row]: the latent value, or the expectation of the rounded and
// clamped latent value under the Gaussian noise.
std::vector<double> dgp_conditional_mean(const FeatureTable& table, const DgpSpec& spec);

struct BenchmarkConfig {
  std::size_t n_train = 500;
  std::size_t reps = 100;
  double train_fraction = 0.5;  // population size is n_train / train_fraction
  DgpSpec dgp = DgpSpec::default_linear();
  std::vector<std::string> methods{"ols_raw", "ols_dummy_wrong", "lasso", "tree_cv", "forest", "bart"};
  std::uint64_t seed = 1;
  std::optional<std::string> gazetteer;  // path; empty: synthetic_gazetteer(gazetteer_size, seed)
  std::size_t gazetteer_size = 1000;
  // path; when set, populations are resampled from this file instead of
  // being drawn from the marginals
  std::optional<std::string> respondents;
  Marginals population;
  EventDraw events;
  std::size_t extra_features = 2;
  // Wrong proximity assumption for ols_dummy_wrong (km, event size units).
  double dummy_cutoff = 100.0;
  double dummy_size_cutoff = 17.5;
  std::size_t cv_folds = 10;
  ForestControls forest;
  BartControls bart;

  void validate() const;
  nlohmann::json to_json() const;
  // Keys absent from `j` keep their defaults; "dgp" may be "linear",
  // "complex", or a full spec object.
  static BenchmarkConfig from_json(const nlohmann::json& j);
};

const std::vector<std::string>& benchmark_methods();

struct ReplicationResult {
  std::size_t rep = 0;
  std::string method;
  double mse = 0.0;
  std::uint64_t seed = 0;  // replication seed
  std::size_t n_train = 0;
};

struct ReplicationData {
  std::uint64_t seed = 0;
  FeatureTable train, test;
};

// Population, events, features, outcome, and split of replication `rep`.
// With a respondent pool the population is resampled from it.
ReplicationData make_replication(const BenchmarkConfig& config, const Gazetteer& gazetteer, std::size_t rep,
                                 const std::vector<Respondent>* respondents = nullptr);

// Test MSE of one method on one replication's data.
double score_method(const std::string& method, const BenchmarkConfig& config, const ReplicationData& data);

// Every (replication, method) pair, replication-major, methods in config order.
std::vector<ReplicationResult> run_benchmark(const BenchmarkConfig& config);

void write_results_csv(std::ostream& out, const std::vector<ReplicationResult>& results);

// Median test MSE per method over the replications.
std::vector<std::pair<std::string, double>> median_by_method(const std::vector<ReplicationResult>& results);

}  // namespace proxtree
