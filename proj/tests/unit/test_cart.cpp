#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "oracles/cart_oracle.hpp"
#include "oracles/prune_oracle.hpp"
#include "proxtree/cart.hpp"
#include "proxtree/errors.hpp"
#include "proxtree/random.hpp"
#include "support.hpp"
#include "tree_match.hpp"

using namespace proxtree;

namespace {

FeatureTable one_column(std::vector<double> x, std::vector<double> y, const std::string& name = "x") {
  FeatureTable t(testing::make_ids(x.size()));
  t.add_column(name, std::move(x));
  t.set_outcome(std::move(y));
  return t;
}

std::vector<oracle::FlatNode> flatten(const RegressionTree& t) {
  std::vector<oracle::FlatNode> out;
  for (const auto& nd : t.nodes())
    out.push_back({nd.is_leaf(), static_cast<std::size_t>(std::max(nd.left, 0)),
                   static_cast<std::size_t>(std::max(nd.right, 0)), nd.sse});
  return out;
}

// Internal nodes of `sub` (as (feature, threshold, n) triples along paths)
// must exist in `tree`: walk both together.
bool is_pruned_subtree(const RegressionTree& sub, std::size_t i, const RegressionTree& tree, std::size_t k) {
  const auto& a = sub.nodes()[i];
  const auto& b = tree.nodes()[k];
  if (a.n != b.n || a.mean != b.mean) return false;
  if (a.is_leaf()) return true;
  if (b.is_leaf() || a.feature != b.feature || a.threshold != b.threshold) return false;
  return is_pruned_subtree(sub, static_cast<std::size_t>(a.left), tree, static_cast<std::size_t>(b.left)) &&
         is_pruned_subtree(sub, static_cast<std::size_t>(a.right), tree, static_cast<std::size_t>(b.right));
}

}  // namespace

TEST_SUITE("cart") {
  TEST_CASE("constant outcome gives a single leaf") {
    auto t = grow(one_column({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21},
                             std::vector<double>(21, 2.0)));
    CHECK(t.nodes().size() == 1);
    CHECK(t.root().mean == 2.0);
  }

  TEST_CASE("binary step is split at 0.5") {
    std::vector<double> x(20), y(20);
    for (int i = 0; i < 20; ++i) x[i] = y[i] = i % 2;
    TreeControls c;
    c.min_leaf = 5;
    auto t = grow(one_column(x, y), c);
    REQUIRE(t.split_count() == 1);
    CHECK(t.root().threshold == 0.5);
    CHECK(t.nodes()[1].mean == 0.0);
    CHECK(t.nodes()[2].mean == 1.0);
  }

  TEST_CASE("empty table is an input error") {
    FeatureTable t;
    t.set_outcome({});
    CHECK_THROWS_AS(grow(t), InputError);
  }

  TEST_CASE("max_splits bounds the internal node count and picks the best splits first") {
    std::mt19937_64 rng(3);
    auto t = testing::random_table(400, 4, rng);
    TreeControls c;
    c.cp = 0.0;
    c.min_split = 2;
    c.min_leaf = 1;
    c.max_splits = 10;
    auto tree = grow(t, c);
    CHECK(tree.split_count() == 10);
    c.max_splits.reset();
    auto full = grow(t, c);
    CHECK(full.split_count() > 10);
    // The root split is the same in both.
    CHECK(full.root().feature == tree.root().feature);
    CHECK(full.root().threshold == tree.root().threshold);
  }

  TEST_CASE("tree matches the exhaustive-search oracle on random tables") {
    std::mt19937_64 rng(99);
    for (int rep = 0; rep < 60; ++rep) {
      const std::size_t n = 8 + rng() % 23;
      const std::size_t p = 1 + rng() % 3;
      auto t = testing::random_table(n, p, rng);
      TreeControls c;
      c.min_split = 2 + rng() % 6;
      c.min_leaf = 1 + rng() % 3;
      c.cp = (rep % 3 == 0) ? 0.0 : 0.01;
      auto tree = grow(t, c);
      std::vector<double> y(t.outcome().begin(), t.outcome().end());
      auto o = oracle::grow_tree(testing::columns_of(t), y, {c.min_split, c.min_leaf, c.cp});
      CHECK_MESSAGE(testing::compare_trees(tree, *o).empty(), "rep " << rep << ": " << testing::compare_trees(tree, *o));
    }
  }

  TEST_CASE("leaf means, row coverage and monotone SSE") {
    std::mt19937_64 rng(12);
    auto t = testing::random_table(300, 3, rng);
    TreeControls c;
    c.cp = 0.0;
    auto tree = grow(t, c);
    const auto cols = tree.bind(t);
    std::vector<double> sum(tree.nodes().size(), 0.0);
    std::vector<std::size_t> count(tree.nodes().size(), 0);
    for (std::size_t i = 0; i < t.rows(); ++i) {
      // Instrumented walk: exactly one leaf visited.
      std::size_t k = 0, leaves_seen = 0;
      while (true) {
        const auto& nd = tree.nodes()[k];
        if (nd.is_leaf()) {
          ++leaves_seen;
          break;
        }
        k = static_cast<std::size_t>(cols[static_cast<std::size_t>(nd.feature)][i] < nd.threshold ? nd.left : nd.right);
      }
      CHECK(leaves_seen == 1);
      CHECK(k == tree.leaf_for(cols, i));
      sum[k] += t.outcome()[i];
      ++count[k];
    }
    for (std::size_t k = 0; k < tree.nodes().size(); ++k) {
      const auto& nd = tree.nodes()[k];
      if (!nd.is_leaf()) {
        const auto& l = tree.nodes()[static_cast<std::size_t>(nd.left)];
        const auto& r = tree.nodes()[static_cast<std::size_t>(nd.right)];
        CHECK(l.sse + r.sse <= nd.sse * (1 + 1e-12));
        CHECK(nd.n == l.n + r.n);
        continue;
      }
      CHECK(count[k] == nd.n);
      CHECK(nd.mean == doctest::Approx(sum[k] / static_cast<double>(count[k])).epsilon(1e-12));
    }
  }

  TEST_CASE("permuting an unused column leaves predictions unchanged") {
    std::mt19937_64 rng(31);
    auto t = testing::random_table(200, 3, rng);
    auto tree = grow(t, TreeControls{});
    const auto used = tree.used_features();
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (std::find(used.begin(), used.end(), j) != used.end()) continue;
      auto shuffled = t;
      auto col = shuffled.mutable_column(j);
      std::shuffle(col.begin(), col.end(), rng);
      CHECK(tree.predict(shuffled) == tree.predict(t));
    }
  }

  TEST_CASE("prediction needs every split column") {
    std::vector<double> x(20), y(20);
    for (int i = 0; i < 20; ++i) x[i] = y[i] = i % 2;
    TreeControls c;
    c.min_leaf = 5;
    auto tree = grow(one_column(x, y, "dist"), c);
    FeatureTable other(testing::make_ids(2));
    other.add_column("age", {1, 2});
    try {
      tree.predict(other);
      FAIL("expected InputError");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("dist") != std::string::npos);
    }
  }

  TEST_CASE("Democrat far from the event lands in the Democrat/far leaf") {
    // Two-level tree: party=D first, then distance at 200 km for Democrats.
    std::vector<TreeNode> nodes(5);
    nodes[0] = {0, 0.5, 1, 2, 2.5, 100, 0};
    nodes[1] = {-1, 0, -1, -1, 2.0, 50, 0};  // non-Democrats
    nodes[2] = {1, 200.0, 3, 4, 3.0, 50, 0};
    nodes[3] = {-1, 0, -1, -1, 2.8, 20, 0};  // Democrats closer than 200 km
    nodes[4] = {-1, 0, -1, -1, 3.2, 30, 0};  // Democrats 200 km or more away
    RegressionTree tree({"party=D", "dist_near1"}, nodes);
    FeatureTable row(testing::make_ids(1));
    row.add_column("party=D", {1.0});
    row.add_column("dist_near1", {250.0});
    CHECK(tree.predict(row)[0] == 3.2);
  }

  TEST_CASE("json round trip is exact") {
    std::mt19937_64 rng(5);
    auto t = testing::random_table(200, 3, rng);
    auto tree = grow(t, TreeControls{});
    auto back = RegressionTree::from_json(nlohmann::json::parse(tree.to_json().dump()));
    CHECK(back == tree);
  }

  TEST_CASE("prune path: trivial cases") {
    auto leaf = grow(one_column({1, 2, 3}, {1, 1, 1}));
    CHECK(prune_path(leaf).size() == 1);
    std::vector<double> x(20), y(20);
    for (int i = 0; i < 20; ++i) x[i] = y[i] = i % 2;
    TreeControls c;
    c.min_leaf = 5;
    auto path = prune_path(grow(one_column(x, y), c));
    REQUIRE(path.size() == 2);
    CHECK(path[0].tree.split_count() == 1);
    CHECK(path[1].tree.split_count() == 0);
  }

  TEST_CASE("prune path matches exhaustive subtree enumeration") {
    std::mt19937_64 rng(17);
    int checked = 0;
    for (int rep = 0; rep < 200 && checked < 40; ++rep) {
      auto t = testing::random_table(100, 3, rng);
      TreeControls c;
      c.cp = 0.0;
      c.max_splits = 2 + rng() % 4;  // at most 6 leaves
      c.min_leaf = 3;
      c.min_split = 6;
      auto tree = grow(t, c);
      if (tree.leaf_count() < 3) continue;
      ++checked;
      auto path = prune_path(tree);
      const auto flat = flatten(tree);
      CHECK(path.front().alpha == 0.0);
      CHECK(path.back().tree.nodes().size() == 1);
      for (std::size_t k = 0; k < path.size(); ++k) {
        if (k > 0) {
          CHECK(path[k].alpha > path[k - 1].alpha);
          CHECK(is_pruned_subtree(path[k].tree, 0, path[k - 1].tree, 0));
        }
        const double a = path[k].alpha;
        const double cost = path[k].tree.training_sse() + a * static_cast<double>(path[k].tree.leaf_count());
        CHECK(cost <= oracle::min_cost(flat, a) * (1 + 1e-12) + 1e-12);
        // Just below the next alpha the same subtree is still optimal.
        if (k + 1 < path.size()) {
          const double b = a + 0.999 * (path[k + 1].alpha - a);
          const double cost_b = path[k].tree.training_sse() + b * static_cast<double>(path[k].tree.leaf_count());
          CHECK(cost_b <= oracle::min_cost(flat, b) * (1 + 1e-12) + 1e-12);
        }
      }
    }
    CHECK(checked == 40);
  }

  TEST_CASE("cv on pure noise collapses toward the root") {
    double small = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed);
      std::normal_distribution<double> e(0, 1);
      std::uniform_real_distribution<double> u(0, 1);
      FeatureTable t(testing::make_ids(200));
      for (int j = 0; j < 3; ++j) {
        std::vector<double> x(200);
        for (auto& v : x) v = u(rng);
        t.add_column("x" + std::to_string(j), std::move(x));
      }
      std::vector<double> y(200);
      for (auto& v : y) v = e(rng);
      t.set_outcome(y);
      CvTrace trace;
      auto tree = fit_cv(t, 10, seed, TreeControls{}, &trace);
      if (tree.split_count() <= 2) small += 1;
      double m = 0, var = 0;
      for (double v : y) m += v / 200.0;
      for (double v : y) var += (v - m) * (v - m) / 200.0;
      CHECK(trace.cv_mse[trace.chosen] == doctest::Approx(var).epsilon(0.2));
    }
    CHECK(small >= 16);
  }

  TEST_CASE("cv recovers a step threshold") {
    Rng rng(4);
    std::normal_distribution<double> e(0, 0.1);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> x(500), y(500);
    for (int i = 0; i < 500; ++i) {
      x[i] = u(rng);
      y[i] = (x[i] < 0.3 ? 1.0 : 0.0) + e(rng);
    }
    auto tree = fit_cv(one_column(x, y), 10, 7);
    REQUIRE(tree.split_count() >= 1);
    CHECK(tree.root().threshold == doctest::Approx(0.3).epsilon(0.05 / 0.3));
  }

  TEST_CASE("cv is deterministic and validates fold count") {
    std::mt19937_64 rng(6);
    auto t = testing::random_table(120, 3, rng);
    CHECK(fit_cv(t, 10, 3) == fit_cv(t, 10, 3));
    auto tiny = testing::random_table(5, 1, rng);
    CHECK_THROWS_AS(fit_cv(tiny, 10, 3), ConfigError);
  }
}
