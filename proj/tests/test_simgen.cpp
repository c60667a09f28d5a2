#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support.hpp"

#include "reenroll/simgen.hpp"

using namespace support;

namespace {

SimConfig null_config() {
  SimConfig cfg;
  cfg.beta = {0.0, 0.0, 0.0};
  cfg.delta = {0.0, 0.0, 0.0};
  cfg.beta_pair.fill(0.0);
  cfg.delta_pair.fill(0.0);
  return cfg;
}

}  // namespace

TEST_CASE("arm pair index") {
  CHECK(arm_pair_index(1, 1) == 0);
  CHECK(arm_pair_index(1, 3) == 2);
  CHECK(arm_pair_index(2, 3) == 4);
  CHECK(arm_pair_index(3, 2) == 6);
  CHECK(arm_pair_index(2, 2) == -1);
}

TEST_CASE("draws are a pure function of (seed, rep, index)") {
  SimConfig cfg;
  const auto a = draw_participant(cfg, 3, 17);
  const auto b = draw_participant(cfg, 3, 17);
  CHECK(a.x_c1 == b.x_c1);
  CHECK(a.y2 == b.y2);
  CHECK(a.arm1 == b.arm1);
  const auto c = draw_participant(cfg, 4, 17);
  CHECK(a.x_c1 != c.x_c1);
  const auto t1 = generate_trial(cfg, 2);
  const auto t2 = generate_trial(cfg, 2);
  REQUIRE(t1.records.size() == t2.records.size());
  for (std::size_t i = 0; i < t1.records.size(); ++i) CHECK(t1.records[i] == t2.records[i]);
}

TEST_CASE("generator structure") {
  SimConfig cfg;
  std::size_t cat2 = 0, re = 0;
  const std::uint32_t N = 1'000'000;
  std::size_t bad = 0;
  for (std::uint32_t i = 0; i < N; ++i) {
    const auto p = draw_participant(cfg, 0, i);
    cat2 += p.x_cat == 2;
    re += p.reenrolled;
    // Re-enrollment only from both-eligible participants, into the other substudy.
    if (p.reenrolled && (p.x_cat != 2 || p.substudy2 == p.substudy1)) ++bad;
    if (p.x_cat == 0 && p.substudy1 != Substudy::HS) ++bad;
    if (p.x_cat == 1 && p.substudy1 != Substudy::DA) ++bad;
    if (p.x_c1 < cfg.trunc_lo || p.x_c1 > cfg.trunc_hi) ++bad;
    if (p.x_c2 != p.x_c1 + p.v) ++bad;
    if (p.substudy1 == Substudy::HS && p.arm1 == 3) ++bad;
    if (p.substudy1 == Substudy::DA && p.arm1 == 2) ++bad;
  }
  CHECK(bad == 0);
  const double f_cat2 = static_cast<double>(cat2) / N;
  CHECK(std::fabs(f_cat2 - 0.73) < 0.002);
  CHECK(std::fabs(static_cast<double>(re) / static_cast<double>(cat2) - 0.58) < 0.002);

  cfg.scenario = 2;
  cat2 = re = 0;
  for (std::uint32_t i = 0; i < N; ++i) {
    const auto p = draw_participant(cfg, 0, i);
    cat2 += p.x_cat == 2;
    re += p.reenrolled;
  }
  CHECK(std::fabs(static_cast<double>(re) / static_cast<double>(cat2) - 0.58) < 0.005);

  cfg.scenario = 1;
  cfg.reenroll_rate = 0.0;
  const auto trial = generate_trial(cfg, 1);
  CHECK(trial.reenrolled == 0);
  CHECK(trial.records.max_episode() == 1);
}

TEST_CASE("assignment probabilities agree with the scheme") {
  SimConfig cfg;
  cfg.n = 200;
  const auto trial = generate_trial(cfg, 9);
  const auto scheme = simulation_scheme(cfg);
  std::size_t row = 0;
  for (std::size_t i = 0; i < trial.latent.size(); ++i) {
    const auto& p = trial.latent[i];
    for (int t = 1; t <= (p.reenrolled ? 2 : 1); ++t) {
      const auto& rec = trial.records[row++];
      REQUIRE(rec.episode == t);
      const auto probs = assignment_probabilities(cfg, p, t);
      for (int a = 0; a < 3; ++a) {
        CHECK(probs[static_cast<std::size_t>(a)] ==
              scheme.assignment_prob(rec.z_values, t, std::to_string(a + 1)));
      }
      CHECK(*rec.outcome == (t == 1 ? p.observed_y1() : p.observed_y2()));
    }
  }
  CHECK(row == trial.records.size());
}

TEST_CASE("config JSON round trip and validation") {
  SimConfig cfg;
  cfg.n = 123;
  cfg.scenario = 2;
  cfg.truncation = Truncation::clamp;
  cfg.beta_pair[3] = 0.125;
  const auto again = SimConfig::from_json(cfg.to_json());
  CHECK(again.to_json() == cfg.to_json());
  CHECK(SimConfig::from_json(R"({"n": 50})").n == 50);
  SimConfig badcfg;
  badcfg.p_control = 1.5;
  ErrorKind k{};
  CHECK_FALSE(error_of([&] { badcfg.validate(); }, &k).empty());
  CHECK(k == ErrorKind::config);
}

TEST_CASE("oracle: chunked parallel sum is independent of the worker count") {
  SimConfig cfg;
  const std::size_t draws = 3 * kOracleChunk + 1234;
  const auto a = truth_oracle(cfg, draws, 1);
  const auto b = truth_oracle(cfg, draws, 4);
  const auto s = truth_oracle_serial(cfg, draws);
  REQUIRE(a.values.size() == 8);
  for (const auto& [key, v] : a.values) {
    CAPTURE(key);
    CHECK(v.value == b.values.at(key).value);
    CHECK(v.mc_se == b.values.at(key).mc_se);
    CHECK(std::fabs(v.value - s.values.at(key).value) < 1e-12);
    CHECK(v.mc_se > 0.0);
  }
  CHECK(TruthTable::from_json(a.to_json()).values.at("2v1").value == a.values.at("2v1").value);
  CHECK(TruthTable::from_json(R"({"values": {"2v1": 1.5}})").at("2v1").value == 1.5);
}

TEST_CASE("oracle: null generator has zero contrasts; scenario does not move the truth") {
  // Potential outcomes carry independent noise, so the null truth is zero
  // up to Monte Carlo error.
  const auto t0 = truth_oracle(null_config(), 200'000);
  for (const auto& [key, v] : t0.values) CHECK(std::fabs(v.value) < 4.0 * v.mc_se);

  SimConfig s1, s2;
  s2.scenario = 2;
  const auto a = truth_oracle(s1, 400'000);
  const auto b = truth_oracle(s2, 400'000);
  // Episode-1 truths use the same draws; the pooled truth moves only by MC error.
  CHECK(a.at("2v1:episode1").value == b.at("2v1:episode1").value);
  CHECK(a.at("3v1:episode1").value == b.at("3v1:episode1").value);
  CHECK(std::fabs(a.at("2v1").value - b.at("2v1").value) < 0.02);
}

TEST_CASE("replications: parallel equals serial; one replication has no SD") {
  SimConfig cfg;
  cfg.n = 200;
  cfg.reps = 6;
  const auto cells = default_cells();
  CHECK(cells.size() == 26);
  const auto truth = truth_oracle(cfg, 100'000);
  const auto par = run_replications(cfg, cells, truth, 3);
  const auto ser = run_replications_serial(cfg, cells, truth);
  CHECK(summary_csv(par) == summary_csv(ser));
  CHECK(summary_csv(par) == summary_csv(run_replications(cfg, cells, truth, 1)));
  const auto& r = par.row("ipw", "2v1");
  CHECK(r.reps_used + r.failures == 6);

  cfg.reps = 1;
  const auto one = run_replications(cfg, cells, truth, 2);
  CHECK_FALSE(one.row("ps", "3v1").sd.has_value());
  CHECK(contains(summary_csv(one), "NA"));
}
