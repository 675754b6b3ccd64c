#include <doctest.h>

#include <atomic>
#include <set>
#include <sstream>

#include "proxtree/csv.hpp"
#include "proxtree/errors.hpp"
#include "proxtree/parallel.hpp"
#include "proxtree/random.hpp"
#include "proxtree/stats.hpp"
#include "proxtree/table.hpp"

using namespace proxtree;

TEST_SUITE("foundation") {
  TEST_CASE("derived seeds differ across streams and are stable") {
    CHECK(derive_seed(1, {0}) == derive_seed(1, {0}));
    CHECK(derive_seed(1, {0}) != derive_seed(1, {1}));
    CHECK(derive_seed(1, {0, 1}) != derive_seed(1, {1, 0}));
    CHECK(derive_seed(2, {0}) != derive_seed(1, {0}));
  }

  TEST_CASE("random permutation is a permutation") {
    Rng rng(7);
    auto p = random_permutation(100, rng);
    std::set<std::size_t> s(p.begin(), p.end());
    CHECK(s.size() == 100);
    CHECK(*s.rbegin() == 99);
  }

  TEST_CASE("parallel_for runs every index once for any thread limit") {
    for (std::size_t threads : {1, 2, 5}) {
      set_thread_limit(threads);
      std::vector<std::atomic<int>> hits(257);
      parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
      for (auto& h : hits) CHECK(h.load() == 1);
    }
    set_thread_limit(0);
  }

  TEST_CASE("parallel_for propagates exceptions") {
    set_thread_limit(3);
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                      if (i == 4) throw InputError("boom");
                    }),
                    InputError);
    set_thread_limit(0);
  }

  TEST_CASE("quantile type 7 and median") {
    std::vector<double> v{1, 2, 3, 4};
    CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
    CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 4.0);
    CHECK(median({5, 1, 3}) == 3.0);
    CHECK(variance(v) == doctest::Approx(1.25));
  }

  TEST_CASE("format_double round-trips") {
    Rng rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
      const double x = u(rng) / 3.0;
      CHECK(*parse_number(format_double(x)) == x);
    }
  }

  TEST_CASE("csv parsing handles quotes, CRLF and BOM") {
    auto d = parse_csv("\xEF\xBB\xBFid,name\r\n1,\"a,b\"\r\n\r\n2,\"say \"\"hi\"\"\"\r\n", "mem");
    REQUIRE(d.header == std::vector<std::string>{"id", "name"});
    REQUIRE(d.records.size() == 2);
    CHECK(d.records[0][1] == "a,b");
    CHECK(d.records[1][1] == "say \"hi\"");
    CHECK(d.line[1] == 4);
  }

  TEST_CASE("csv rejects ragged rows with a line number") {
    try {
      parse_csv("a,b\n1,2\n3\n", "f.csv");
      FAIL("expected InputError");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("f.csv:3") != std::string::npos);
    }
  }

  TEST_CASE("csv writer quotes when needed") {
    std::ostringstream out;
    write_csv_record(out, {"a", "b,c", "d\"e"});
    CHECK(out.str() == "a,\"b,c\",\"d\"\"e\"\n");
  }

  TEST_CASE("feature table checks") {
    FeatureTable t({"a", "b"});
    t.add_column("x", {1, 2});
    CHECK_THROWS_AS(t.add_column("x", {1, 2}), InputError);
    CHECK_THROWS_AS(t.add_column("y", {1}), InputError);
    CHECK_THROWS_AS(t.column_index("nope"), InputError);
    t.add_column("z", {std::nan(""), 1});
    CHECK_THROWS_AS(t.validate(), InputError);
  }
}
