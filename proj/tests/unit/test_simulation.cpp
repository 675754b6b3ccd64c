#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "proxtree/errors.hpp"
#include "proxtree/importance.hpp"
#include "proxtree/parallel.hpp"
#include "proxtree/simulation.hpp"
#include "proxtree/stats.hpp"
#include "support.hpp"

using namespace proxtree;

namespace {

// Asymptotic Kolmogorov tail P(K > x) = 2 sum_k (-1)^(k-1) exp(-2 k^2 x^2).
double kolmogorov_tail(double x) {
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) s += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * x * x);
  return s;
}

double ks_uniform(std::vector<double> v, double lo, double hi) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = (v[i] - lo) / (hi - lo);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

FeatureTable grid_table(const std::vector<double>& dist, double party_r) {
  FeatureTable t(testing::make_ids(dist.size()));
  t.add_column("dist_near1", dist);
  t.add_column("size_near1", std::vector<double>(dist.size(), 10.0));
  t.add_column("party=D", std::vector<double>(dist.size(), 0.0));
  t.add_column("party=R", std::vector<double>(dist.size(), party_r));
  t.add_column("age", std::vector<double>(dist.size(), 45.0));
  return t;
}

BenchmarkConfig cheap_config() {
  BenchmarkConfig c;
  c.n_train = 200;
  c.reps = 3;
  c.forest.trees = 25;
  c.bart.trees = 20;
  c.bart.iterations = 200;
  c.bart.burn_in = 100;
  c.cv_folds = 5;
  return c;
}

}  // namespace

TEST_SUITE("simulation") {
  TEST_CASE("population") {
    const auto gaz = synthetic_gazetteer(300, 1);
    const auto pop = gen_population(500, gaz, {}, 7);
    REQUIRE(pop.size() == 500);
    for (const auto& r : pop) {
      REQUIRE(gaz.find(r.zip).has_value());
      CHECK(*gaz.find(r.zip) == r.point.location);
      CHECK((r.female == 0.0 || r.female == 1.0));
      CHECK(r.education >= 1.0);
      CHECK(r.education <= 4.0);
      CHECK(r.age >= 18.0);
      CHECK(r.age <= 90.0);
    }
    const auto again = gen_population(500, gaz, {}, 7);
    for (std::size_t i = 0; i < 500; ++i) {
      CHECK(again[i].zip == pop[i].zip);
      CHECK(again[i].age == pop[i].age);
      CHECK(again[i].party == pop[i].party);
    }
    Marginals fixed;
    fixed.age_min = fixed.age_max = 40;
    for (const auto& r : gen_population(100, gaz, fixed, 3)) CHECK(r.age == 40.0);
    CHECK_THROWS_AS(gen_population(10, Gazetteer{}, {}, 1), InputError);
  }

  TEST_CASE("events") {
    const auto gaz = synthetic_gazetteer(100, 2);
    const auto cat = gen_events(gaz, 5);
    REQUIRE(cat.events.size() == 15);
    std::set<std::pair<double, double>> places;
    for (const auto& e : cat.events) {
      CHECK(e.time >= 0.0);
      CHECK(e.time <= 10.0);
      CHECK(e.size >= 5.0);
      CHECK(e.size <= 30.0);
      places.insert({e.location.lat, e.location.lon});
    }
    CHECK(places.size() == 15);
    CHECK_NOTHROW(cat.validate());
    CHECK_THROWS_AS(gen_events(synthetic_gazetteer(14, 1), 1), InputError);
  }

  TEST_CASE("event timing is uniform on [0, 10]") {
    const auto gaz = synthetic_gazetteer(40, 3);
    // Critical value of the KS statistic at the 0.1% level for n = 10000.
    const double n = 10000.0;
    double lo = 1.0, hi = 3.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (kolmogorov_tail(mid) > 0.001 ? lo : hi) = mid;
    }
    const double critical = lo / (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n));
    int rejected = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
      std::vector<double> times;
      for (std::uint64_t call = 0; times.size() < 10000; ++call)
        for (const auto& e : gen_events(gaz, derive_seed(static_cast<std::uint64_t>(s), {call})).events)
          if (times.size() < 10000) times.push_back(e.time);
      rejected += ks_uniform(times, 0.0, 10.0) > critical ? 1 : 0;
    }
    CHECK(rejected <= seeds / 100);
  }

  TEST_CASE("feature set") {
    const auto gaz = synthetic_gazetteer(200, 4);
    const auto pop = gen_population(50, gaz, {}, 1);
    const auto t = simulation_features(pop, gen_events(gaz, 2), 2, 3);
    const std::vector<std::string> expect{
        "dist_near1",   "dist_near2",   "dist_near3",   "time_near1", "time_near2", "time_near3",
        "size_near1",   "size_near2",   "size_near3",   "dist_recent1", "dist_recent2", "dist_recent3",
        "dist_largest1", "dist_largest2", "dist_largest3", "female",   "education",  "age",
        "party=D",      "party=R",      "noise1",       "noise2"};
    CHECK(t.names() == expect);
    for (std::size_t i = 0; i < t.rows(); ++i) {
      CHECK(t.column("party=D")[i] + t.column("party=R")[i] <= 1.0);
      CHECK(t.column("dist_near1")[i] <= t.column("dist_near2")[i]);
    }
    // Irrelevant columns never enter either default DGP.
    for (const auto& spec : {DgpSpec::default_linear(), DgpSpec::default_complex()})
      for (const auto& c : spec.columns()) {
        CHECK(c.rfind("noise", 0) != 0);
        CHECK(c.rfind("dist_recent", 0) != 0);
        CHECK(c.rfind("dist_largest", 0) != 0);
        CHECK(c.rfind("time_", 0) != 0);
      }
  }

  TEST_CASE("constant DGP") {
    DgpSpec s;
    s.linear.clear();
    s.noise_sd = 0.0;
    s.intercept = 2.0;
    const auto t = grid_table({10, 500, 3000}, 0);
    for (double v : apply_dgp(t, s, 1)) CHECK(v == 2.0);
  }

  TEST_CASE("complex DGP jumps at the threshold") {
    const auto spec = DgpSpec::default_complex();
    std::vector<double> dist;
    for (double d = 0.0; d <= 400.0; d += 25.0) dist.push_back(d);
    dist.push_back(std::nextafter(200.0, 0.0));
    for (double r : {0.0, 1.0}) {
      const auto latent = dgp_latent(grid_table(dist, r), spec);
      // Direct evaluation of the declared formula.
      for (std::size_t i = 0; i < dist.size(); ++i) {
        const double near = dist[i] < 200.0 ? 1.0 : 0.0;
        const double direct = 2.0 + 0.04 * 10.0 - 0.6 * r + 0.01 * 45.0 + 0.8 * near + 0.6 * near * r;
        CHECK(latent[i] == doctest::Approx(direct).epsilon(1e-14));
      }
      const double jump = latent.back() - latent[8];  // just below 200 vs exactly 200
      CHECK(jump == doctest::Approx(0.8 + 0.6 * r).epsilon(1e-12));
      for (std::size_t i = 1; i < 8; ++i) CHECK(latent[i] == latent[0]);
    }
  }

  TEST_CASE("linear DGP decreases in distance") {
    const auto spec = DgpSpec::default_linear();
    std::vector<double> dist;
    for (double d = 0.0; d <= 3000.0; d += 100.0) dist.push_back(d);
    const auto latent = dgp_latent(grid_table(dist, 0), spec);
    for (std::size_t i = 1; i < latent.size(); ++i) CHECK(latent[i] < latent[i - 1]);
    CHECK(latent[10] - latent[0] == doctest::Approx(-1.2).epsilon(1e-12));
  }

  TEST_CASE("discretized conditional mean matches simulation") {
    auto spec = DgpSpec::default_linear();
    std::vector<double> dist{0, 400, 900, 1500, 2500, 4000};
    const auto t = grid_table(dist, 1);
    const auto cm = dgp_conditional_mean(t, spec);
    std::vector<double> avg(dist.size(), 0.0);
    const int draws = 20000;
    for (int s = 0; s < draws; ++s) {
      const auto y = apply_dgp(t, spec, static_cast<std::uint64_t>(s));
      for (std::size_t i = 0; i < y.size(); ++i) avg[i] += y[i] / draws;
    }
    for (std::size_t i = 0; i < dist.size(); ++i) CHECK(std::abs(avg[i] - cm[i]) < 0.02);
    spec.discretize = false;
    CHECK(dgp_conditional_mean(t, spec) == dgp_latent(t, spec));
  }

  TEST_CASE("spec validation") {
    auto c = DgpSpec::default_complex();
    c.thresholds.pop_back();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    auto l = DgpSpec::default_linear();
    l.quadratic.push_back({"age", 45.0, -0.001});
    CHECK_THROWS_AS(l.validate(), ConfigError);
    FeatureTable t(testing::make_ids(2));
    t.add_column("age", {30, 40});
    CHECK_THROWS_AS(dgp_latent(t, DgpSpec::default_linear()), InputError);
    const auto back = DgpSpec::from_json(nlohmann::json::parse(DgpSpec::default_complex().to_json().dump()));
    CHECK(back.to_json() == DgpSpec::default_complex().to_json());
  }

  TEST_CASE("configuration") {
    auto c = BenchmarkConfig::from_json(nlohmann::json::parse(R"({"n_train": 300, "dgp": "complex", "reps": 4})"));
    CHECK(c.n_train == 300);
    CHECK(c.dgp.kind == "complex");
    CHECK(c.bart.trees == 200);
    CHECK(c.forest.trees == 200);
    const auto back = BenchmarkConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK_THROWS_AS(BenchmarkConfig::from_json(nlohmann::json::parse(R"({"methods": ["knn"]})")), ConfigError);
    CHECK_THROWS_AS(BenchmarkConfig::from_json(nlohmann::json::parse(R"({"nreps": 3})")), ConfigError);
  }

  TEST_CASE("well-specified OLS on noiseless data") {
    BenchmarkConfig c;
    c.reps = 1;
    c.methods = {"ols_raw"};
    c.dgp.noise_sd = 0.0;
    c.dgp.discretize = false;
    const auto r = run_benchmark(c);
    REQUIRE(r.size() == 1);
    CHECK(r[0].mse < 0.05);
  }

  TEST_CASE("benchmark is deterministic and independent of the thread count") {
    auto c = cheap_config();
    c.reps = 2;
    std::ostringstream a, b;
    set_thread_limit(1);
    write_results_csv(a, run_benchmark(c));
    set_thread_limit(4);
    write_results_csv(b, run_benchmark(c));
    set_thread_limit(0);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("rep,method,mse,seed\n0,ols_raw,", 0) == 0);
  }

  TEST_CASE("no method is catastrophically worse than the mean") {
    auto c = cheap_config();
    c.reps = 6;
    for (const auto& dgp : {DgpSpec::default_linear(), DgpSpec::default_complex()}) {
      c.dgp = dgp;
      const auto results = run_benchmark(c);
      const Gazetteer gaz = synthetic_gazetteer(c.gazetteer_size, c.seed);
      std::size_t ok = 0;
      for (const auto& r : results) {
        const auto d = make_replication(c, gaz, r.rep);
        const double ybar = mean(d.train.outcome());
        const double base = mse(d.test.outcome(), std::vector<double>(d.test.rows(), ybar));
        ok += r.mse <= 1.5 * base ? 1 : 0;
        CHECK(r.mse >= 0.0);
      }
      CHECK(static_cast<double>(ok) >= 0.95 * static_cast<double>(results.size()));
    }
  }

  TEST_CASE("populations resampled from a respondent file") {
    testing::TempDir dir("respondents");
    const auto gaz = synthetic_gazetteer(50, 9);
    std::string text = "zip,female,education,age,party\n";
    for (int i = 0; i < 6; ++i)
      text += gaz.entries()[static_cast<std::size_t>(i)].first + "," + std::to_string(i % 2) + ",2," +
              std::to_string(30 + i) + "," + "IDR"[i % 3] + "\n";
    testing::write_text(dir / "resp.csv", text);
    const auto pool = load_respondents(dir / "resp.csv", gaz);
    REQUIRE(pool.size() == 6);
    CHECK(pool[4].party == 1);
    CHECK(pool[4].point.location == gaz.entries()[4].second);

    BenchmarkConfig c;
    c.n_train = 40;
    const auto d = make_replication(c, gaz, 0, &pool);
    CHECK(d.train.rows() == 40);
    for (const auto* t : {&d.train, &d.test})
      for (double age : t->column("age")) CHECK((age >= 30.0 && age <= 35.0));
    const auto again = make_replication(c, gaz, 0, &pool);
    CHECK(std::equal(again.train.outcome().begin(), again.train.outcome().end(), d.train.outcome().begin()));

    testing::write_text(dir / "bad.csv", "zip,female,education,age,party\n99999,0,1,40,D\n");
    CHECK_THROWS_AS(load_respondents(dir / "bad.csv", gaz), InputError);
    testing::write_text(dir / "bad2.csv", "zip,female,education,age,party\n" + gaz.entries()[0].first + ",0,1,40,X\n");
    CHECK_THROWS_AS(load_respondents(dir / "bad2.csv", gaz), InputError);

    c.respondents = (dir / "resp.csv").string();
    CHECK(BenchmarkConfig::from_json(c.to_json()).respondents == c.respondents);
  }

  TEST_CASE("medians and unknown methods") {
    std::vector<ReplicationResult> r{{0, "a", 1.0, 0, 10}, {1, "a", 3.0, 0, 10}, {0, "b", 2.0, 0, 10}};
    const auto m = median_by_method(r);
    REQUIRE(m.size() == 2);
    CHECK(m[0] == std::pair<std::string, double>{"a", 2.0});
    auto c = cheap_config();
    c.methods = {"ols_raw", "svm"};
    CHECK_THROWS_AS(run_benchmark(c), ConfigError);
  }
}
