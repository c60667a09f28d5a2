#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support.hpp"

#include <numeric>

#include "reenroll/simgen.hpp"

using namespace support;

namespace {

AssignmentScheme simplify() { return AssignmentScheme::from_json(read_data("simplify_scheme.json")); }

using Z = std::map<std::string, std::string>;

// One participant per scheme row, with a second episode for two of them.
RecordSet simplify_records() {
  auto z = [](const char* hs, const char* da, const char* ew) {
    return std::map<std::string, std::string>{{"HS", hs}, {"DA", da}, {"EW", ew}};
  };
  std::vector<Row> rows = {
      {"a", 1, z("1", "0", "1"), "1", 1.0, {}, "HS"},
      {"b", 1, z("0", "1", "2"), "3", 1.0, {}, "DA"},
      {"c", 1, z("1", "1", "1"), "2", 1.0, {}, "HS"},
      {"c", 2, z("1", "1", "1"), "3", 1.0, {}, "DA"},
      {"d", 1, z("1", "1", "2"), "3", 1.0, {}, "DA"},
      {"d", 2, z("1", "1", "2"), "2", 1.0, {}, "HS"},
      {"e", 1, z("1", "1", "2"), "1", 1.0, {}, "HS"},
  };
  auto s = schema_for(rows);
  s.derived_z = {{"prior_substudy", DerivedZ{"substudy", 1}}};
  return make_rs(rows, s);
}

}  // namespace

TEST_CASE("scheme file rows parse exactly") {
  const auto sc = simplify();
  const Z z{{"HS", "1"}, {"DA", "1"}, {"EW", "2"}};
  CHECK(sc.assignment_prob(z, 1, "1") == 0.5);
  CHECK(sc.assignment_prob(z, 1, "2") == 0.375);
  CHECK(sc.assignment_prob(z, 1, "3") == 0.125);
  CHECK(sc.assignment_prob({{"HS", "1"}, {"DA", "0"}, {"EW", "1"}}, 1, "3") == 0.0);
  CHECK(sc.assignment_prob({{"HS", "1"}, {"DA", "1"}, {"EW", "1"}, {"prior_substudy", "DA"}}, 2, "2") == 0.5);
  for (const auto& row : sc.rows()) {
    CHECK(std::accumulate(row.probabilities.begin(), row.probabilities.end(), 0.0) == 1.0);
  }
}

TEST_CASE("scheme JSON round trip keeps the decimal text") {
  const auto sc = simplify();
  const auto again = AssignmentScheme::from_json(sc.to_json());
  REQUIRE(again.rows().size() == sc.rows().size());
  for (std::size_t r = 0; r < sc.rows().size(); ++r) {
    CHECK(again.rows()[r].probabilities == sc.rows()[r].probabilities);
    CHECK(again.rows()[r].probability_text == sc.rows()[r].probability_text);
  }
}

TEST_CASE("the simulation scheme equals the scheme file") {
  const auto a = simplify();
  const auto b = simulation_scheme(SimConfig{});
  REQUIRE(a.rows().size() == b.rows().size());
  for (std::size_t r = 0; r < a.rows().size(); ++r) {
    CHECK(a.rows()[r].probabilities == b.rows()[r].probabilities);
  }
}

TEST_CASE("rows that do not sum to one are rejected") {
  const auto msg = error_of([] {
    AssignmentScheme::from_json(R"({"arms":["1","2"],"rows":[{"episode":1,"z":{},"p":{"1":"0.5","2":"0.4"}}]})");
  });
  CHECK(contains(msg, "do not sum to 1"));
  CHECK(contains(msg, "row 0"));
}

TEST_CASE("uniform scheme is a single row") {
  const auto sc = AssignmentScheme::from_json(
      R"({"arms":["1","2"],"rows":[{"episode":"any","z":{},"p":{"1":"0.5","2":"0.5"}}]})");
  CHECK(sc.rows().size() == 1);
  CHECK(sc.assignment_prob({{"anything", "x"}}, 7, "2") == 0.5);
}

TEST_CASE("uncovered and ambiguous z-patterns") {
  const auto sc = simplify();
  CHECK(contains(error_of([&] { sc.match({{"HS", "0"}, {"DA", "0"}, {"EW", "1"}}, 1); }), "uncovered z-pattern"));
  const auto amb = AssignmentScheme::from_json(
      R"({"arms":["1","2"],"rows":[{"episode":"any","z":{"g":"any"},"p":{"1":"0.5","2":"0.5"}},
                                   {"episode":1,"z":{"g":"x"},"p":{"1":"0.25","2":"0.75"}}]})");
  CHECK(contains(error_of([&] { amb.match({{"g", "x"}}, 1); }), "ambiguous scheme"));
  CHECK(amb.match({{"g", "x"}}, 2) == 0);
}

TEST_CASE("ECE membership follows the positive-probability rule") {
  const auto sc = simplify();
  const auto rs = simplify_records();
  const DesignResolution d(sc, rs);

  const auto p12 = ece_population(d, "1", "2", 1);
  // a (HS only) is a member; b (DA only) is not.
  CHECK(p12.members == std::vector<std::size_t>{0, 2, 4, 6});
  const auto p23 = ece_population(d, "2", "3", 1);
  CHECK(std::find(p23.members.begin(), p23.members.end(), 0) == p23.members.end());

  // Episode 2 only contains participants with T_i >= 2.
  const auto p12t2 = ece_population(d, "1", "2", 2);
  CHECK(p12t2.members == std::vector<std::size_t>{5});  // d's episode 2 (prior DA)
  const auto p13t2 = ece_population(d, "1", "3", 2);
  CHECK(p13t2.members == std::vector<std::size_t>{3});

  for (const auto& [j, k] : std::vector<std::pair<const char*, const char*>>{{"1", "2"}, {"1", "3"}, {"2", "3"}}) {
    for (int t = 1; t <= 2; ++t) {
      CHECK(ece_population(d, j, k, t).members == ece_population(d, k, j, t).members);
    }
  }
}

TEST_CASE("strata in lexicographic order of the probability pair") {
  const auto sc = simplify();
  const auto rs = simplify_records();
  const DesignResolution d(sc, rs);
  const auto pop = ece_population(d, "1", "2", 1);
  const auto st = derive_strata(pop);
  REQUIRE(st.count() == 3);
  CHECK(st.strata[0].pi_j == 0.5);
  CHECK(st.strata[0].pi_k == 0.25);
  CHECK(st.strata[1].pi_k == 0.375);
  CHECK(st.strata[2].pi_k == 0.5);
  std::size_t total = 0;
  for (std::size_t h = 0; h < st.count(); ++h) {
    CHECK(st.strata[h].id == static_cast<int>(h) + 1);
    total += st.strata[h].positions.size();
    for (auto m : st.strata[h].positions) {
      CHECK(pop.pi_j[m] == st.strata[h].pi_j);
      CHECK(pop.pi_k[m] == st.strata[h].pi_k);
      CHECK(st.stratum_of[m] == h);
    }
  }
  CHECK(total == pop.size());

  const auto t2 = derive_strata(ece_population(d, "1", "3", 2));
  REQUIRE(t2.count() == 1);
  CHECK(t2.strata[0].pi_j == 0.5);
  CHECK(t2.strata[0].pi_k == 0.5);

  // Deterministic ids.
  const auto again = derive_strata(pop);
  for (std::size_t h = 0; h < st.count(); ++h) CHECK(again.strata[h].positions == st.strata[h].positions);
}

TEST_CASE("uniform scheme gives a single stratum") {
  const auto rs = make_rs({{"a", 1, {}, "A", 1.0}, {"b", 1, {}, "B", 2.0}, {"c", 1, {}, "A", 3.0}});
  const auto sc = uniform_scheme({"A", "B"});
  const auto pop = ece_population(sc, rs, "A", "B", 1);
  CHECK(pop.size() == 3);
  CHECK(derive_strata(pop).count() == 1);
}

TEST_CASE("records whose arm has zero probability are rejected") {
  std::vector<Row> rows = {{"a", 1, {{"HS", "1"}, {"DA", "0"}, {"EW", "1"}}, "3", 1.0, {}, "HS"}};
  auto s = schema_for(rows);
  s.derived_z = {{"prior_substudy", DerivedZ{"substudy", 1}}};
  const auto rs = make_rs(rows, s);
  const auto sc = simplify();
  CHECK_FALSE(error_of([&] { DesignResolution d(sc, rs); }).empty());
}
