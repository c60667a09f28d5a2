#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support.hpp"

#include <sstream>

#include "reenroll/simgen.hpp"

using namespace support;

namespace {

Schema toy_schema() {
  Schema s;
  s.substudy_column = "substudy";
  s.z_columns = {{"site", ValueType::categorical}};
  s.x_columns = {{"age", ValueType::numeric}, {"sex", ValueType::categorical}};
  s.derived_z = {{"prior_substudy", DerivedZ{"substudy", 1}}};
  return s;
}

RecordSet parse(const std::string& text, const Schema& s = toy_schema()) {
  std::istringstream in(text);
  return parse_records(in, s);
}

const char* kHeader = "participant_id,episode,site,age,sex,substudy,arm,outcome\n";

}  // namespace

TEST_CASE("two rows for one participant") {
  const auto rs = parse(std::string(kHeader) + "p1,1,a,40,F,S1,1,2.5\np1,2,a,41,F,S2,2,3\n");
  CHECK(rs.n_participants() == 1);
  CHECK(rs.max_episode() == 2);
  CHECK(rs.episodes_of("p1").size() == 2);
  CHECK(rs[1].z_values.at("prior_substudy") == "S1");
  CHECK(rs[0].z_values.at("prior_substudy") == "none");
  CHECK(std::get<double>(rs[0].x_values.at("age")) == 40.0);
  CHECK(std::get<std::string>(rs[0].x_values.at("sex")) == "F");
}

TEST_CASE("episode gaps and duplicates are rejected") {
  ErrorKind k{};
  auto msg = error_of([] { parse(std::string(kHeader) + "p2,1,a,1,F,S1,1,1\np2,3,a,1,F,S1,1,1\n"); }, &k);
  CHECK(contains(msg, "episode gap"));
  CHECK(k == ErrorKind::validation);
  msg = error_of([] { parse(std::string(kHeader) + "p2,1,a,1,F,S1,1,1\np2,1,a,1,F,S1,2,1\n"); });
  CHECK(contains(msg, "duplicate episode"));
  msg = error_of([] { parse(std::string(kHeader) + "p2,0,a,1,F,S1,1,1\n"); });
  CHECK(contains(msg, ">= 1"));
}

TEST_CASE("malformed rows report the line number") {
  ErrorKind k{};
  auto msg = error_of([] { parse(std::string(kHeader) + "p1,1,a,40,F,S1,1,2\np2,1,a,40\n"); }, &k);
  CHECK(k == ErrorKind::parse);
  CHECK(contains(msg, "line 3"));
  msg = error_of([] { parse(std::string(kHeader) + "p1,x,a,40,F,S1,1,2\n"); });
  CHECK(contains(msg, "line 2"));
  msg = error_of([] { parse(std::string(kHeader) + "p1,1,a,forty,F,S1,1,2\n"); });
  CHECK(contains(msg, "line 2"));
}

TEST_CASE("missing outcomes: empty cell and NA") {
  const auto rs = parse(std::string(kHeader) + "p1,1,a,40,F,S1,1,\np2,1,a,40,F,S1,1,NA\np3,1,a,,F,S1,1,1\n");
  CHECK_FALSE(rs[0].outcome.has_value());
  CHECK_FALSE(rs[1].outcome.has_value());
  CHECK(std::holds_alternative<std::monostate>(rs[2].x_values.at("age")));
}

TEST_CASE("quoted fields") {
  const auto rs = parse(std::string(kHeader) + "\"p,1\",1,\"a \"\"b\"\"\",40,F,S1,1,2\n");
  CHECK(rs[0].participant_id == "p,1");
  CHECK(rs[0].z_values.at("site") == "a \"b\"");
}

TEST_CASE("round trip through the canonical writer") {
  const std::string text = std::string(kHeader) +
                           "p1,1,a,40.25,F,S1,1,2.5\np1,2,b,41,F,S2,2,NA\np2,1,\"x,y\",0.1,M,S1,2,-1e-07\n";
  const auto rs = parse(text);
  std::ostringstream out;
  write_records(out, rs);
  const auto again = parse(out.str());
  REQUIRE(again.size() == rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) CHECK(again[i] == rs[i]);
  std::ostringstream out2;
  write_records(out2, again);
  CHECK(out2.str() == out.str());
}

TEST_CASE("schema JSON round trip") {
  const Schema s = toy_schema();
  CHECK(Schema::from_json(s.to_json()) == s);
  const Schema sim = Schema::from_json(read_data("simplify_schema.json"));
  CHECK(sim == simulation_schema());
}

TEST_CASE("complete-case policy") {
  SUBCASE("no missing outcomes is the identity") {
    const auto rs = parse(std::string(kHeader) + "p1,1,a,40,F,S1,1,1\np1,2,a,40,F,S2,1,2\n");
    const auto [out, rep] = apply_missingness_policy(rs, MissingnessPolicy::complete_case_record);
    CHECK(rep.dropped_count == 0);
    REQUIRE(out.size() == rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) CHECK(out[i] == rs[i]);
  }
  SUBCASE("missing at episode 1 drops the later episode too") {
    const auto rs = parse(std::string(kHeader) + "p1,1,a,40,F,S1,1,NA\np1,2,a,40,F,S2,1,2\np2,1,a,40,F,S1,1,3\n");
    const auto [out, rep] = apply_missingness_policy(rs, MissingnessPolicy::complete_case_record);
    CHECK(rep.dropped_count == 2);
    CHECK(out.size() == 1);
    CHECK(out.n_participants() == 1);
    CHECK_FALSE(rep.warnings.empty());
  }
  SUBCASE("missing at episode 2 drops only that record") {
    const auto rs = parse(std::string(kHeader) + "p1,1,a,40,F,S1,1,1\np1,2,a,40,F,S2,1,\n");
    const auto [out, rep] = apply_missingness_policy(rs, MissingnessPolicy::complete_case_record);
    CHECK(rep.dropped_count == 1);
    CHECK(out.size() == 1);
    CHECK(out.max_episode() == 1);
  }
  SUBCASE("fail policy lists locators") {
    const auto rs = parse(std::string(kHeader) + "p1,1,a,40,F,S1,1,1\np1,2,a,40,F,S2,1,\n");
    const auto msg = error_of([&] { (void)apply_missingness_policy(rs, MissingnessPolicy::fail); });
    CHECK(contains(msg, "p1"));
  }
}

TEST_CASE("episode slices partition the records") {
  const auto rs = parse(std::string(kHeader) + "p1,1,a,1,F,S1,1,1\np1,2,a,1,F,S2,1,1\np2,1,a,1,F,S1,1,1\n");
  const auto s1 = episode_slice(rs, 1);
  const auto s2 = episode_slice(rs, 2);
  CHECK(s1.size() == 2);
  CHECK(s2.size() == 1);
  CHECK(s2.participant_count() == 1);
  CHECK(s1.size() + s2.size() == rs.size());
  CHECK(episode_slice(rs, 3).size() == 0);
}

TEST_CASE("simulated trial: row count and episode-2 participants match the generator") {
  SimConfig cfg;
  cfg.n = 600;
  const auto trial = generate_trial(cfg, 0);
  CHECK(trial.records.size() == trial.rows_emitted);
  CHECK(trial.records.n_participants() == 600);
  CHECK(episode_slice(trial.records, 2).participant_count() == trial.reenrolled);
  std::size_t cat2 = 0;
  for (const auto& p : trial.latent) cat2 += p.x_cat == 2;
  const double frac = static_cast<double>(trial.reenrolled) / static_cast<double>(cat2);
  CHECK(frac == doctest::Approx(0.58).epsilon(0.1));

  // Serialize and parse back through the schema file.
  std::ostringstream out;
  write_records(out, trial.records);
  std::istringstream in(out.str());
  const auto parsed = parse_records(in, Schema::from_json(read_data("simplify_schema.json")));
  REQUIRE(parsed.size() == trial.records.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) CHECK(parsed[i] == trial.records[i]);
}
