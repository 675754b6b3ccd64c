#include <doctest.h>

#include <random>
#include <set>

#include "proxtree/dataset.hpp"
#include "proxtree/errors.hpp"
#include "support.hpp"

using namespace proxtree;
using testing::TempDir;
using testing::write_text;

TEST_SUITE("dataset") {
  TEST_CASE("explicit coordinates bypass the gazetteer") {
    TempDir dir("ds");
    write_text(dir / "obs.csv", "id,lat,lon,zip,age\na,40,-100,99999,30\n");
    auto data = load_observations(dir / "obs.csv", Schema{}, nullptr);
    REQUIRE(data.points.size() == 1);
    CHECK(data.points[0].location == GeoPoint::normalized(40, -100));
  }

  TEST_CASE("zip resolves through the gazetteer with zero padding") {
    TempDir dir("ds");
    write_text(dir / "gaz.csv", "zip,lat,lon\n02138,42.38,-71.13\n94305,37.42,-122.17\n");
    write_text(dir / "obs.csv", "id,zip,age\na,2138,30\nb,94305,40\n");
    auto gaz = load_gazetteer(dir / "gaz.csv");
    auto data = load_observations(dir / "obs.csv", Schema{}, &gaz);
    REQUIRE(data.points.size() == 2);
    CHECK(data.points[0].location == GeoPoint::normalized(42.38, -71.13));
    CHECK(data.points[1].location == GeoPoint::normalized(37.42, -122.17));
  }

  TEST_CASE("unknown zip: strict error names zip and row, lenient drops the row") {
    TempDir dir("ds");
    write_text(dir / "gaz.csv", "zip,lat,lon\n02138,42.38,-71.13\n");
    write_text(dir / "obs.csv", "id,zip,age\na,02138,30\nb,11111,40\n");
    auto gaz = load_gazetteer(dir / "gaz.csv");
    try {
      load_observations(dir / "obs.csv", Schema{}, &gaz);
      FAIL("expected InputError");
    } catch (const InputError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("11111") != std::string::npos);
      CHECK(msg.find("obs.csv:3") != std::string::npos);
    }
    LoadOptions lenient;
    lenient.strict = false;
    auto data = load_observations(dir / "obs.csv", Schema{}, &gaz, lenient);
    CHECK(data.points.size() == 1);
    REQUIRE(data.dropped.size() == 1);
    CHECK(data.dropped[0].line == 3);
  }

  TEST_CASE("malformed numbers report the row") {
    TempDir dir("ds");
    write_text(dir / "obs.csv", "id,lat,lon,outcome\na,40,-100,2\nb,4x,-100,3\n");
    Schema s;
    s.outcome = "outcome";
    try {
      load_observations(dir / "obs.csv", s, nullptr);
      FAIL("expected InputError");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("obs.csv:3") != std::string::npos);
    }
  }

  TEST_CASE("one-hot encoding drops the first declared level") {
    AttributeFrame f;
    f.names = {"party", "age"};
    f.values = {{"D", "R", "I"}, {"42", "30", "50"}};
    Schema s;
    s.categorical = {{"party", {"D", "I", "R"}}};
    auto enc = Encoder::fit(f, s);
    auto t = enc.encode(f, {"a", "b", "c"});
    CHECK(t.names() == std::vector<std::string>{"party=I", "party=R", "age"});
    CHECK(t.column("party=I")[1] == 0.0);
    CHECK(t.column("party=R")[1] == 1.0);
    CHECK(t.column("age")[0] == 42.0);
    AttributeFrame g = f;
    g.values[0][0] = "G";
    try {
      enc.encode(g, {"a", "b", "c"});
      FAIL("expected InputError");
    } catch (const InputError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("party") != std::string::npos);
      CHECK(msg.find("'G'") != std::string::npos);
    }
  }

  TEST_CASE("indicator count is the sum of levels minus one") {
    AttributeFrame f;
    f.names = {"a", "b", "c"};
    f.values = {{"x", "y", "z"}, {"p", "q", "p"}, {"1", "2", "3"}};
    Schema s;
    s.categorical = {{"a", {"x", "y", "z"}}, {"b", {"p", "q"}}, {"c", {"1", "2", "3", "4", "5"}}};
    auto enc = Encoder::fit(f, s);
    CHECK(enc.output_width() == 7);
    CHECK(enc.encode(f, {"1", "2", "3"}).cols() == 7);
  }

  TEST_CASE("undeclared text columns are inferred categorical with sorted levels") {
    AttributeFrame f;
    f.names = {"color"};
    f.values = {{"red", "blue", "green"}};
    auto enc = Encoder::fit(f, Schema{});
    auto t = enc.encode(f, {"a", "b", "c"});
    CHECK(t.names() == std::vector<std::string>{"color=green", "color=red"});
  }

  TEST_CASE("missing values: reject by default, impute on request") {
    TempDir dir("ds");
    write_text(dir / "obs.csv", "id,lat,lon,age,party\na,40,-100,30,D\nb,41,-100,,R\nc,42,-100,50,\nd,43,-100,70,R\n");
    CHECK_THROWS_AS(load_observations(dir / "obs.csv", Schema{}, nullptr), InputError);
    LoadOptions opt;
    opt.missing = MissingPolicy::impute;
    auto data = load_observations(dir / "obs.csv", Schema{}, nullptr, opt);
    auto enc = Encoder::fit(data.attributes, Schema{});
    impute_missing(data.attributes, enc);
    CHECK(data.attributes.values[0][1] == "50");
    CHECK(data.attributes.values[1][2] == "R");
  }

  TEST_CASE("schema file is read in declaration order") {
    TempDir dir("ds");
    write_text(dir / "schema.json",
               R"({"outcome":"y","categorical":{"party":["R","D","I"],"edu":["hs","ba"]},"numeric":["age"]})");
    auto s = load_schema(dir / "schema.json");
    REQUIRE(s.categorical.size() == 2);
    CHECK(s.categorical[0].name == "party");
    CHECK(s.categorical[0].levels.front() == "R");
    CHECK(*s.outcome == "y");
  }

  TEST_CASE("split is deterministic and partitions the rows") {
    SplitSpec spec;
    spec.train_count = 5;
    spec.seed = 1;
    auto [a1, b1] = split_indices(10, spec);
    auto [a2, b2] = split_indices(10, spec);
    CHECK(a1 == a2);
    CHECK(b1 == b2);
    std::set<std::size_t> all(a1.begin(), a1.end());
    all.insert(b1.begin(), b1.end());
    CHECK(all.size() == 10);
    CHECK(std::is_sorted(a1.begin(), a1.end()));
    spec.seed = 2;
    CHECK(split_indices(10, spec).first != a1);
  }

  TEST_CASE("split sizes") {
    SplitSpec spec;
    spec.train_count = 40000;
    CHECK(split_indices(45700, spec).second.size() == 5700);
    spec.train_count = 55000;
    CHECK(split_indices(64285, spec).second.size() == 9285);
    spec.train_count = 11;
    CHECK_THROWS_AS(split_indices(10, spec), ConfigError);
  }

  TEST_CASE("feature table CSV round trip is exact") {
    std::mt19937_64 rng(4);
    auto t = testing::random_table(40, 3, rng);
    t.mutable_column(0)[0] = 1.0 / 3.0;
    t.mutable_column(0)[1] = -2.5e-300;
    TempDir dir("ds");
    write_feature_table(dir / "t.csv", t);
    auto back = read_feature_table(dir / "t.csv");
    REQUIRE(back.names() == t.names());
    REQUIRE(back.has_outcome());
    CHECK(back.ids() == t.ids());
    for (std::size_t j = 0; j < t.cols(); ++j)
      for (std::size_t i = 0; i < t.rows(); ++i) CHECK(back.column(j)[i] == t.column(j)[i]);
    for (std::size_t i = 0; i < t.rows(); ++i) CHECK(back.outcome()[i] == t.outcome()[i]);
  }

  TEST_CASE("events loader validates") {
    TempDir dir("ds");
    write_text(dir / "ev.csv", "id,lat,lon,time,size,school\n1,40,-100,2,10,1\n2,41,-100,3,5,0\n");
    auto c = load_events(dir / "ev.csv");
    CHECK(c.flag_names == std::vector<std::string>{"school"});
    CHECK(c.events.size() == 2);
    write_text(dir / "bad.csv", "id,lat,lon,time,size\n1,40,-100,-2,10\n");
    CHECK_THROWS_AS(load_events(dir / "bad.csv"), InputError);
    write_text(dir / "dup.csv", "id,lat,lon,time,size\n1,40,-100,2,10\n1,40,-100,2,10\n");
    CHECK_THROWS_AS(load_events(dir / "dup.csv"), InputError);
  }
}
