#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles/lasso_oracle.hpp"
#include "oracles/ols_oracle.hpp"
#include "proxtree/errors.hpp"
#include "proxtree/linear.hpp"
#include "support.hpp"

using namespace proxtree;

namespace {

// Columns share a common factor, so the design is correlated but full rank.
FeatureTable correlated_table(std::size_t n, std::size_t p, std::mt19937_64& rng) {
  FeatureTable t(testing::make_ids(n));
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> common(n);
  for (auto& v : common) v = z(rng);
  std::vector<double> y(n, 0.0);
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = 3.0 * z(rng) + 0.6 * common[i] + static_cast<double>(j);
    const double coef = j < 3 ? w(rng) : 0.0;
    for (std::size_t i = 0; i < n; ++i) y[i] += coef * c[i];
    t.add_column("v" + std::to_string(j), std::move(c));
  }
  for (auto& v : y) v += z(rng);
  t.set_outcome(std::move(y));
  return t;
}

std::vector<double> outcome_of(const FeatureTable& t) { return {t.outcome().begin(), t.outcome().end()}; }

}  // namespace

TEST_SUITE("linear") {
  TEST_CASE("noiseless line") {
    FeatureTable t(testing::make_ids(6));
    t.add_column("x", {0, 1, 2, 3, 4, 5});
    t.set_outcome({3, 5, 7, 9, 11, 13});
    const auto m = fit_ols(t);
    CHECK(m.intercept == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(m.coefficient("x") == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m.std_errors[0] < 1e-10);
    CHECK(m.intercept_se < 1e-10);
    CHECK(m.r_squared == doctest::Approx(1.0));
  }

  TEST_CASE("least squares matches the normal-equations oracle") {
    std::mt19937_64 rng(1);
    auto t = testing::linear_table(200, 5, rng);
    const auto m = fit_ols(t);
    const auto b = oracle::ols(testing::columns_of(t), outcome_of(t));
    CHECK(std::abs(m.intercept - b[0]) < 1e-8);
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(m.coefficients[j] - b[j + 1]) < 1e-8);

    // Residuals are orthogonal to every design column.
    const auto pred = m.predict(t);
    std::vector<double> r(200);
    for (std::size_t i = 0; i < 200; ++i) r[i] = t.outcome()[i] - pred[i];
    double ones = 0.0;
    for (double v : r) ones += v;
    CHECK(std::abs(ones) < 1e-8);
    for (std::size_t j = 0; j < 5; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 200; ++i) dot += t.column(j)[i] * r[i];
      CHECK(std::abs(dot) < 1e-8);
    }
  }

  TEST_CASE("classical standard errors and adjusted R squared") {
    std::mt19937_64 rng(2);
    auto t = testing::linear_table(60, 1, rng);
    const auto m = fit_ols(t);
    const auto x = t.column(0);
    const auto y = t.outcome();
    const double n = 60.0;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < 60; ++i) mx += x[i] / n, my += y[i] / n;
    double sxx = 0, rss = 0, tss = 0;
    const auto pred = m.predict(t);
    for (std::size_t i = 0; i < 60; ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      rss += (y[i] - pred[i]) * (y[i] - pred[i]);
      tss += (y[i] - my) * (y[i] - my);
    }
    const double s = std::sqrt(rss / (n - 2));
    CHECK(m.std_errors[0] == doctest::Approx(s / std::sqrt(sxx)).epsilon(1e-10));
    CHECK(m.intercept_se == doctest::Approx(s * std::sqrt(1.0 / n + mx * mx / sxx)).epsilon(1e-10));
    CHECK(m.r_squared == doctest::Approx(1.0 - rss / tss).epsilon(1e-12));
    CHECK(m.adj_r_squared == doctest::Approx(1.0 - (rss / tss) * (n - 1) / (n - 2)).epsilon(1e-12));
  }

  TEST_CASE("predictions are invariant to affine rescaling of a column") {
    std::mt19937_64 rng(3);
    auto t = testing::linear_table(100, 4, rng);
    const auto base = fit_ols(t).predict(t);
    auto scaled = t;
    std::vector<double> c(t.column(1).begin(), t.column(1).end());
    for (auto& v : c) v = 250.0 * v - 17.0;
    scaled.set_column("x1", c);
    const auto again = fit_ols(scaled).predict(scaled);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(base[i] - again[i]) < 1e-10);
  }

  TEST_CASE("rank deficiency names the dependent columns") {
    std::mt19937_64 rng(4);
    auto t = testing::linear_table(50, 3, rng);
    std::vector<double> sum(50);
    for (std::size_t i = 0; i < 50; ++i) sum[i] = t.column(0)[i] + t.column(2)[i];
    t.add_column("x0_plus_x2", sum);
    try {
      fit_ols(t);
      FAIL("expected an error");
    } catch (const InputError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("x0") != std::string::npos);
      CHECK(msg.find("x2") != std::string::npos);
      CHECK(msg.find("x0_plus_x2") != std::string::npos);
      CHECK(msg.find("x1,") == std::string::npos);
    }
    auto tiny = testing::linear_table(3, 2, rng);
    CHECK_THROWS_AS(fit_ols(tiny), InputError);
  }

  TEST_CASE("lasso at or above lambda_max is the intercept-only model") {
    std::mt19937_64 rng(5);
    auto t = correlated_table(80, 5, rng);
    const double lmax = lasso_lambda_max(t);
    LassoControls c;
    c.lambdas = {lmax, 2.0 * lmax};
    const auto path = lasso_path(t, c);
    double ybar = 0.0;
    for (double v : t.outcome()) ybar += v / 80.0;
    for (std::size_t k = 0; k < 2; ++k) {
      const auto m = path.model(k);
      for (double b : m.coefficients) CHECK(b == 0.0);
      CHECK(m.intercept == doctest::Approx(ybar).epsilon(1e-14));
    }
    // Just below lambda_max one coefficient enters.
    c.lambdas = {0.99 * lmax};
    const auto below = lasso_path(t, c).model(0);
    CHECK(std::count_if(below.coefficients.begin(), below.coefficients.end(), [](double b) { return b != 0.0; }) == 1);
  }

  TEST_CASE("lasso with zero penalty is least squares") {
    std::mt19937_64 rng(6);
    auto t = testing::linear_table(150, 4, rng);
    LassoControls c;
    c.lambdas = {0.0};
    const auto m = lasso_path(t, c).model(0);
    const auto o = fit_ols(t);
    CHECK(std::abs(m.intercept - o.intercept) < 1e-6);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(m.coefficients[j] - o.coefficients[j]) < 1e-6);
  }

  TEST_CASE("orthonormal design gives soft-thresholded least squares") {
    std::mt19937_64 rng(7);
    const std::size_t n = 64, p = 4;
    // Gram-Schmidt on centered Gaussian columns, then scaled so Xs'Xs/n = I.
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<std::vector<double>> q;
    for (std::size_t j = 0; j < p; ++j) {
      std::vector<double> c(n);
      for (auto& v : c) v = z(rng);
      double m = 0.0;
      for (double v : c) m += v / n;
      for (auto& v : c) v -= m;
      for (const auto& prev : q) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += c[i] * prev[i];
        for (std::size_t i = 0; i < n; ++i) c[i] -= dot / static_cast<double>(n) * prev[i];
      }
      double ss = 0.0;
      for (double v : c) ss += v * v;
      for (auto& v : c) v *= std::sqrt(static_cast<double>(n) / ss);
      q.push_back(c);
    }
    FeatureTable t(testing::make_ids(n));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 + 0.8 * q[0][i] - 0.3 * q[1][i] + 0.05 * q[2][i] + 0.4 * z(rng);
    for (std::size_t j = 0; j < p; ++j) t.add_column("q" + std::to_string(j), q[j]);
    t.set_outcome(y);
    const auto ols = oracle::ols(q, y);
    for (double lambda : {0.0, 0.01, 0.1, 0.25, 0.5}) {
      LassoControls c;
      c.lambdas = {lambda};
      const auto m = lasso_path(t, c).model(0);
      for (std::size_t j = 0; j < p; ++j)
        CHECK(std::abs(m.coefficients[j] - oracle::soft_threshold(ols[j + 1], lambda)) < 1e-8);
    }
  }

  TEST_CASE("KKT conditions hold along the whole path") {
    std::size_t monotone = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(100 + seed);
      auto t = correlated_table(60 + 10 * seed, 3 + seed % 6, rng);
      const auto path = lasso_path(t);
      REQUIRE(path.lambdas.size() == 100);
      CHECK(path.lambdas.back() == doctest::Approx(path.lambdas.front() * 1e-4));
      const auto s = oracle::standardize(testing::columns_of(t), outcome_of(t));
      double worst = 0.0;
      for (std::size_t k = 0; k < path.lambdas.size(); ++k)
        worst = std::max(worst, oracle::kkt_violation(s, path.coefficients[k], path.lambdas[k]));
      CHECK(worst <= 1e-6);
      bool ok = true;
      std::size_t prev = 0;
      for (const auto& b : path.coefficients) {
        const auto nz = static_cast<std::size_t>(std::count_if(b.begin(), b.end(), [](double v) { return v != 0.0; }));
        if (nz < prev) ok = false;
        prev = nz;
      }
      monotone += ok ? 1 : 0;
    }
    CHECK(monotone >= 18);
  }

  TEST_CASE("cross-validated lasso") {
    std::mt19937_64 rng(8);
    auto t = correlated_table(200, 8, rng);
    LassoCvTrace trace;
    const auto m = fit_lasso(t, 42, {}, &trace);
    REQUIRE(trace.cv_mse.size() == 100);
    for (std::size_t k = 0; k < trace.cv_mse.size(); ++k) CHECK(trace.cv_mse[trace.chosen] <= trace.cv_mse[k]);
    CHECK(m.lambda == trace.lambdas[trace.chosen]);
    const auto again = fit_lasso(t, 42);
    CHECK(again.coefficients == m.coefficients);
    CHECK(again.intercept == m.intercept);
    // The irrelevant columns are mostly dropped and the signal kept.
    CHECK(m.coefficient("v0") != 0.0);

    auto small = correlated_table(8, 2, rng);
    CHECK_THROWS_AS(fit_lasso(small, 1), ConfigError);
    auto bad = t;
    std::vector<double> c(t.column(0).begin(), t.column(0).end());
    c[5] = INFINITY;
    bad.set_column("v0", c);
    CHECK_THROWS_AS(fit_lasso(bad, 1), InputError);
  }

  TEST_CASE("constant columns never enter") {
    std::mt19937_64 rng(9);
    auto t = testing::linear_table(50, 2, rng);
    t.add_column("flat", std::vector<double>(50, 7.0));
    LassoControls c;
    c.lambdas = {0.0};
    const auto m = lasso_path(t, c).model(0);
    CHECK(m.coefficient("flat") == 0.0);
  }

  TEST_CASE("model JSON round trip") {
    std::mt19937_64 rng(10);
    auto t = testing::linear_table(100, 3, rng);
    for (const auto& m : {fit_ols(t), fit_lasso(t, 3)}) {
      const auto back = LinearModel::from_json(nlohmann::json::parse(m.to_json().dump()));
      CHECK(back.predict(t) == m.predict(t));
      CHECK(back.method == m.method);
    }
  }

  TEST_CASE("threshold dummies") {
    FeatureTable t(testing::make_ids(4));
    t.add_column("dist", {0.2, 0.3, 0.05, 0.2});
    t.add_column("size", {2, 2, 5, 3});
    auto d = threshold_dummies(t, "dist", 0.25, "size", 3);
    CHECK(d.near_small == std::vector<double>{1, 0, 0, 1});
    CHECK(d.near_large == std::vector<double>{0, 0, 1, 0});
    auto narrow = threshold_dummies(t, "dist", 0.1, "size", 3);
    CHECK(narrow.near_small == std::vector<double>{0, 0, 0, 0});
    CHECK(narrow.near_large == std::vector<double>{0, 0, 1, 0});
    CHECK_THROWS_AS(threshold_dummies(t, "dist", NAN, "size", 3), ConfigError);
    CHECK_THROWS_AS(threshold_dummies(t, "nope", 0.1, "size", 3), InputError);
  }
}
