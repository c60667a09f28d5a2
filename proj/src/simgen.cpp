#include "reenroll/simgen.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include <fmt/format.h>
#include <omp.h>

#include "json.hpp"
#include "reenroll/compensated_sum.hpp"
#include "reenroll/error.hpp"
#include "reenroll/philox.hpp"

namespace reenroll {

using json = nlohmann::json;

int arm_pair_index(int arm1, int arm2) {
  static constexpr int table[3][3] = {{0, 1, 2}, {3, -1, 4}, {5, 6, -1}};
  if (arm1 < 1 || arm1 > 3 || arm2 < 1 || arm2 > 3) return -1;
  return table[arm1 - 1][arm2 - 1];
}

std::string_view substudy_label(Substudy s) {
  switch (s) {
    case Substudy::HS: return "HS";
    case Substudy::DA: return "DA";
    case Substudy::none: break;
  }
  return "";
}

// ---------------------------------------------------------------------------
// Config

namespace {

void check_prob(double p, std::string_view name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    fail(ErrorKind::config, fmt::format("sim config: {} = {} is not a probability", name, p));
  }
}

template <std::size_t N>
void read_array(const json& j, const char* key, std::array<double, N>& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != N) {
    fail(ErrorKind::config, fmt::format("sim config: '{}' must be an array of {} numbers", key, N));
  }
  for (std::size_t i = 0; i < N; ++i) out[i] = a[i].get<double>();
}

template <typename T>
void read_value(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void SimConfig::validate() const {
  if (n < 1) fail(ErrorKind::config, "sim config: n must be >= 1");
  if (reps < 1) fail(ErrorKind::config, "sim config: reps must be >= 1");
  if (scenario != 1 && scenario != 2) {
    fail(ErrorKind::config, fmt::format("sim config: scenario {} is not 1 or 2", scenario));
  }
  check_prob(p_xb, "p_xb");
  for (double p : p_cat) check_prob(p, "p_cat");
  if (std::fabs(p_cat[0] + p_cat[1] + p_cat[2] - 1.0) > 1e-12) {
    fail(ErrorKind::config, "sim config: p_cat does not sum to 1");
  }
  check_prob(p_ew1, "p_ew1");
  check_prob(p_hs_ew1, "p_hs_ew1");
  check_prob(p_hs_ew2, "p_hs_ew2");
  check_prob(p_control, "p_control");
  check_prob(reenroll_rate, "reenroll_rate");
  if (!(log_sigma > 0.0)) fail(ErrorKind::config, "sim config: log_sigma must be > 0");
  if (!(trunc_lo < trunc_hi) || !(trunc_lo > 0.0)) {
    fail(ErrorKind::config, "sim config: truncation bounds must satisfy 0 < lo < hi");
  }
}

SimConfig SimConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, fmt::format("sim config: invalid JSON: {}", e.what()));
  }
  if (!j.is_object()) fail(ErrorKind::config, "sim config: top level must be an object");
  SimConfig c;
  try {
    read_value(j, "n", c.n);
    read_value(j, "scenario", c.scenario);
    read_value(j, "seed", c.seed);
    read_value(j, "reps", c.reps);
    read_value(j, "p_xb", c.p_xb);
    read_array(j, "p_cat", c.p_cat);
    read_array(j, "log_mu", c.log_mu);
    read_value(j, "log_sigma", c.log_sigma);
    read_value(j, "sigma_is_variance", c.sigma_is_variance);
    read_value(j, "trunc_lo", c.trunc_lo);
    read_value(j, "trunc_hi", c.trunc_hi);
    if (j.contains("truncation")) {
      const auto t = j.at("truncation").get<std::string>();
      if (t == "rejection") c.truncation = Truncation::rejection;
      else if (t == "clamp") c.truncation = Truncation::clamp;
      else fail(ErrorKind::config, fmt::format("sim config: unknown truncation '{}'", t));
    }
    read_value(j, "p_ew1", c.p_ew1);
    read_value(j, "p_hs_ew1", c.p_hs_ew1);
    read_value(j, "p_hs_ew2", c.p_hs_ew2);
    read_value(j, "p_control", c.p_control);
    read_value(j, "coef_xb", c.coef_xb);
    read_value(j, "coef_xc", c.coef_xc);
    read_array(j, "beta", c.beta);
    read_array(j, "delta", c.delta);
    read_array(j, "beta_pair", c.beta_pair);
    read_array(j, "delta_pair", c.delta_pair);
    read_value(j, "reenroll_rate", c.reenroll_rate);
    read_value(j, "gamma", c.gamma);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, fmt::format("sim config: {}", e.what()));
  }
  c.validate();
  return c;
}

std::string SimConfig::to_json() const {
  json j = json::object();
  j["n"] = n;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["reps"] = reps;
  j["p_xb"] = p_xb;
  j["p_cat"] = p_cat;
  j["log_mu"] = log_mu;
  j["log_sigma"] = log_sigma;
  j["sigma_is_variance"] = sigma_is_variance;
  j["trunc_lo"] = trunc_lo;
  j["trunc_hi"] = trunc_hi;
  j["truncation"] = truncation == Truncation::rejection ? "rejection" : "clamp";
  j["p_ew1"] = p_ew1;
  j["p_hs_ew1"] = p_hs_ew1;
  j["p_hs_ew2"] = p_hs_ew2;
  j["p_control"] = p_control;
  j["coef_xb"] = coef_xb;
  j["coef_xc"] = coef_xc;
  j["beta"] = beta;
  j["delta"] = delta;
  j["beta_pair"] = beta_pair;
  j["delta_pair"] = delta_pair;
  j["reenroll_rate"] = reenroll_rate;
  j["gamma"] = gamma;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Generator

namespace {

enum Purpose : std::uint32_t { kCovariates = 1, kAssignment = 2, kReenroll = 3, kNoise = 4 };

double draw_xc(const SimConfig& cfg, RandomStream& rng, int cat) {
  const double mu = cfg.log_mu[static_cast<std::size_t>(cat)];
  const double sd = cfg.sigma_is_variance ? std::sqrt(cfg.log_sigma) : cfg.log_sigma;
  if (cfg.truncation == Truncation::clamp) {
    return std::clamp(std::exp(mu + sd * rng.normal()), cfg.trunc_lo, cfg.trunc_hi);
  }
  for (;;) {
    const double x = std::exp(mu + sd * rng.normal());
    if (x >= cfg.trunc_lo && x <= cfg.trunc_hi) return x;
  }
}

}  // namespace

std::array<double, 3> assignment_probabilities(const SimConfig& cfg, const LatentParticipant& p,
                                               int episode) {
  const double pc = cfg.p_control;
  if (episode == 2) {
    // Re-enrolled participants go to the alternate substudy.
    if (p.substudy1 == Substudy::DA) return {pc, 1.0 - pc, 0.0};
    return {pc, 0.0, 1.0 - pc};
  }
  switch (p.x_cat) {
    case 0: return {pc, 1.0 - pc, 0.0};
    case 1: return {pc, 0.0, 1.0 - pc};
    default: {
      const double hs = p.ew == 1 ? cfg.p_hs_ew1 : cfg.p_hs_ew2;
      return {pc, hs * (1.0 - pc), (1.0 - hs) * (1.0 - pc)};
    }
  }
}

LatentParticipant draw_participant(const SimConfig& cfg, std::uint32_t rep, std::uint32_t index) {
  LatentParticipant p;
  RandomStream cov(cfg.seed, rep, index, kCovariates);
  p.x_b = cov.bernoulli(cfg.p_xb) ? 1 : 0;
  const double uc = cov.uniform();
  p.x_cat = uc < cfg.p_cat[0] ? 0 : (uc < cfg.p_cat[0] + cfg.p_cat[1] ? 1 : 2);
  p.ew = cov.bernoulli(cfg.p_ew1) ? 1 : 2;
  p.u = cov.normal();
  p.v = cov.uniform();
  p.x_c1 = draw_xc(cfg, cov, p.x_cat);
  p.x_c2 = p.x_c1 + p.v;

  RandomStream assign(cfg.seed, rep, index, kAssignment);
  const double us = assign.uniform();
  if (p.x_cat == 0) {
    p.substudy1 = Substudy::HS;
  } else if (p.x_cat == 1) {
    p.substudy1 = Substudy::DA;
  } else {
    p.substudy1 = us < (p.ew == 1 ? cfg.p_hs_ew1 : cfg.p_hs_ew2) ? Substudy::HS : Substudy::DA;
  }
  const bool control1 = assign.bernoulli(cfg.p_control);
  p.arm1 = control1 ? 1 : (p.substudy1 == Substudy::HS ? 2 : 3);

  RandomStream re(cfg.seed, rep, index, kReenroll);
  if (p.x_cat == 2) {
    const double rate =
        cfg.scenario == 1 ? cfg.reenroll_rate : 1.0 / (1.0 + std::exp(cfg.gamma + p.u));
    p.reenrolled = re.bernoulli(rate);
  }
  const bool control2 = assign.bernoulli(cfg.p_control);
  if (p.reenrolled) {
    p.substudy2 = p.substudy1 == Substudy::HS ? Substudy::DA : Substudy::HS;
    p.arm2 = control2 ? 1 : (p.substudy2 == Substudy::HS ? 2 : 3);
    assert(arm_pair_index(p.arm1, p.arm2) >= 0);
  }

  RandomStream noise(cfg.seed, rep, index, kNoise);
  const double cat = static_cast<double>(p.x_cat);
  const double base1 = cfg.coef_xb * p.x_b + cfg.coef_xc * p.x_c1 + p.u;
  for (std::size_t a = 0; a < 3; ++a) {
    p.y1[a] = base1 + cfg.beta[a] * cat + cfg.delta[a] + noise.normal();
  }
  const double base2 = cfg.coef_xb * p.x_b + cfg.coef_xc * p.x_c2 + p.u;
  for (std::size_t q = 0; q < 7; ++q) {
    p.y2[q] = base2 + cfg.beta_pair[q] * cat + cfg.delta_pair[q] + noise.normal();
  }
  return p;
}

Schema simulation_schema() {
  Schema s;
  s.substudy_column = "substudy";
  s.z_columns = {{"HS", ValueType::categorical},
                 {"DA", ValueType::categorical},
                 {"EW", ValueType::categorical}};
  s.x_columns = {{"x_b", ValueType::numeric},
                 {"x_c", ValueType::numeric},
                 {"x_cat", ValueType::categorical}};
  s.derived_z = {{"prior_substudy", DerivedZ{"substudy", 1}}};
  return s;
}

AssignmentScheme simulation_scheme(const SimConfig& cfg) {
  cfg.validate();
  const double pc = cfg.p_control;
  auto row = [](std::optional<int> t, std::map<std::string, std::optional<std::string>> z,
                std::vector<double> p) {
    SchemeRow r;
    r.episode = t;
    r.z_pattern = std::move(z);
    r.probabilities = std::move(p);
    return r;
  };
  auto both = [&](double hs) {
    return std::vector<double>{pc, hs * (1.0 - pc), (1.0 - hs) * (1.0 - pc)};
  };
  std::vector<SchemeRow> rows;
  rows.push_back(row(1, {{"HS", "1"}, {"DA", "0"}}, {pc, 1.0 - pc, 0.0}));
  rows.push_back(row(1, {{"HS", "0"}, {"DA", "1"}}, {pc, 0.0, 1.0 - pc}));
  rows.push_back(row(1, {{"HS", "1"}, {"DA", "1"}, {"EW", "1"}}, both(cfg.p_hs_ew1)));
  rows.push_back(row(1, {{"HS", "1"}, {"DA", "1"}, {"EW", "2"}}, both(cfg.p_hs_ew2)));
  rows.push_back(row(2, {{"HS", "1"}, {"DA", "1"}, {"prior_substudy", "DA"}}, {pc, 1.0 - pc, 0.0}));
  rows.push_back(row(2, {{"HS", "1"}, {"DA", "1"}, {"prior_substudy", "HS"}}, {pc, 0.0, 1.0 - pc}));
  return AssignmentScheme({"1", "2", "3"}, std::move(rows));
}

namespace {

EpisodeRecord make_record(const LatentParticipant& p, std::size_t index, int episode) {
  EpisodeRecord r;
  r.participant_id = fmt::format("p{:06d}", index + 1);
  r.episode = episode;
  r.z_values["HS"] = p.x_cat != 1 ? "1" : "0";
  r.z_values["DA"] = p.x_cat != 0 ? "1" : "0";
  r.z_values["EW"] = p.ew == 1 ? "1" : "2";
  r.x_values["x_b"] = static_cast<double>(p.x_b);
  r.x_values["x_c"] = episode == 1 ? p.x_c1 : p.x_c2;
  r.x_values["x_cat"] = std::to_string(p.x_cat);
  const Substudy s = episode == 1 ? p.substudy1 : p.substudy2;
  r.substudy = std::string(substudy_label(s));
  const int arm = episode == 1 ? p.arm1 : p.arm2;
  r.arm = std::to_string(arm);
  r.outcome = episode == 1 ? p.observed_y1() : p.observed_y2();
  return r;
}

}  // namespace

SimTrial generate_trial(const SimConfig& cfg, std::uint32_t rep) {
  cfg.validate();
  std::vector<LatentParticipant> latent;
  latent.reserve(cfg.n);
  std::vector<EpisodeRecord> records;
  records.reserve(cfg.n * 2);
  std::size_t reenrolled = 0;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    latent.push_back(draw_participant(cfg, rep, static_cast<std::uint32_t>(i)));
    const auto& p = latent.back();
    records.push_back(make_record(p, i, 1));
    if (p.reenrolled) {
      records.push_back(make_record(p, i, 2));
      ++reenrolled;
    }
  }
  const std::size_t rows = records.size();
  return SimTrial{RecordSet(std::move(records), simulation_schema()), std::move(latent), rows,
                  reenrolled};
}

// ---------------------------------------------------------------------------
// Truth oracle

const TruthValue& TruthTable::at(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) fail(ErrorKind::config, fmt::format("truth table has no entry '{}'", key));
  return it->second;
}

TruthTable TruthTable::from_json(std::string_view text) {
  TruthTable t;
  try {
    const json j = json::parse(text);
    t.draws = j.value("draws", std::size_t{0});
    for (const auto& [k, v] : j.at("values").items()) {
      TruthValue tv;
      if (v.is_number()) {
        tv.value = v.get<double>();
      } else {
        tv.value = v.at("value").get<double>();
        tv.mc_se = v.value("mc_se", 0.0);
      }
      t.values[k] = tv;
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::config, fmt::format("truth file: {}", e.what()));
  }
  return t;
}

std::string TruthTable::to_json() const {
  json j;
  j["draws"] = draws;
  j["values"] = json::object();
  for (const auto& [k, v] : values) j["values"][k] = {{"value", v.value}, {"mc_se", v.mc_se}};
  return j.dump(2);
}

namespace {

struct OracleTarget {
  const char* key;
  int treated;   // j; the control is always arm 1
  int scope;     // 0 pooled, 1 episode 1, 2 episode 2, 3 substudy
};

constexpr OracleTarget kTargets[] = {
    {"2v1", 2, 0}, {"2v1:episode1", 2, 1}, {"2v1:episode2", 2, 2}, {"2v1:substudy=HS", 2, 3},
    {"3v1", 3, 0}, {"3v1:episode1", 3, 1}, {"3v1:episode2", 3, 2}, {"3v1:substudy=DA", 3, 3},
};
constexpr std::size_t kNumTargets = std::size(kTargets);

// Per-participant ratio components a_i = sum_t I * (Y(j) - Y(k)), b_i = sum_t I.
template <typename Sum>
struct RatioSums {
  Sum a, b, aa, ab, bb;
  void add(double ai, double bi) {
    a += ai;
    b += bi;
    aa += ai * ai;
    ab += ai * bi;
    bb += bi * bi;
  }
};

template <typename Sum>
using OracleAccum = std::array<RatioSums<Sum>, kNumTargets>;

template <typename Sum>
void accumulate_draw(const SimConfig& cfg, const LatentParticipant& p, OracleAccum<Sum>& acc) {
  const auto pi1 = assignment_probabilities(cfg, p, 1);
  std::array<double, 3> pi2{};
  if (p.reenrolled) pi2 = assignment_probabilities(cfg, p, 2);
  const Substudy sub_of[4] = {Substudy::none, Substudy::none, Substudy::HS, Substudy::DA};

  for (std::size_t k = 0; k < kNumTargets; ++k) {
    const int j = kTargets[k].treated;
    const auto ju = static_cast<std::size_t>(j - 1);
    double d1 = 0.0, d2 = 0.0;
    bool in1 = false, in2 = false;
    if (kTargets[k].scope == 3) {
      in1 = p.substudy1 == sub_of[j];
      in2 = p.reenrolled && p.substudy2 == sub_of[j];
    } else {
      in1 = pi1[ju] > 0.0 && pi1[0] > 0.0;
      in2 = p.reenrolled && pi2[ju] > 0.0 && pi2[0] > 0.0;
    }
    if (kTargets[k].scope == 2) in1 = false;
    if (kTargets[k].scope == 1) in2 = false;
    if (in1) d1 = p.y1[ju] - p.y1[0];
    if (in2) {
      const int qj = arm_pair_index(p.arm1, j);
      const int q1 = arm_pair_index(p.arm1, 1);
      assert(qj >= 0 && q1 >= 0);
      d2 = p.y2[static_cast<std::size_t>(qj)] - p.y2[static_cast<std::size_t>(q1)];
    }
    acc[k].add(d1 + d2, static_cast<double>(in1) + static_cast<double>(in2));
  }
}

template <typename Sum>
TruthTable finish(const OracleAccum<Sum>& acc, std::size_t draws) {
  TruthTable t;
  t.draws = draws;
  for (std::size_t k = 0; k < kNumTargets; ++k) {
    const auto& s = acc[k];
    const double b = s.b.value();
    TruthValue v;
    if (b > 0.0) {
      v.value = s.a.value() / b;
      const double ss = s.aa.value() - 2.0 * v.value * s.ab.value() + v.value * v.value * s.bb.value();
      v.mc_se = std::sqrt(std::max(0.0, ss)) / b;
    } else {
      v.value = std::nan("");
      v.mc_se = std::nan("");
    }
    t.values[kTargets[k].key] = v;
  }
  return t;
}

void check_draws(std::size_t draws) {
  if (draws < 1) fail(ErrorKind::config, "truth oracle: draws must be >= 1");
  if (draws > std::size_t{0xFFFFFFFFu}) fail(ErrorKind::config, "truth oracle: draws exceeds 2^32 - 1");
}

}  // namespace

TruthTable truth_oracle(const SimConfig& cfg, std::size_t draws, int workers) {
  cfg.validate();
  check_draws(draws);
  const std::size_t chunks = (draws + kOracleChunk - 1) / kOracleChunk;
  std::vector<OracleAccum<CompensatedSum>> partial(chunks);
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kOracleChunk;
    const std::size_t hi = std::min(draws, lo + kOracleChunk);
    auto& acc = partial[static_cast<std::size_t>(c)];
    for (std::size_t i = lo; i < hi; ++i) {
      accumulate_draw(cfg, draw_participant(cfg, kOracleRep, static_cast<std::uint32_t>(i)), acc);
    }
  }
  OracleAccum<CompensatedSum> total;
  for (const auto& acc : partial) {
    for (std::size_t k = 0; k < kNumTargets; ++k) {
      total[k].a += acc[k].a.value();
      total[k].b += acc[k].b.value();
      total[k].aa += acc[k].aa.value();
      total[k].ab += acc[k].ab.value();
      total[k].bb += acc[k].bb.value();
    }
  }
  return finish(total, draws);
}

TruthTable truth_oracle_serial(const SimConfig& cfg, std::size_t draws) {
  cfg.validate();
  check_draws(draws);
  OracleAccum<CompensatedSum> acc;
  for (std::size_t i = 0; i < draws; ++i) {
    accumulate_draw(cfg, draw_participant(cfg, kOracleRep, static_cast<std::uint32_t>(i)), acc);
  }
  return finish(acc, draws);
}

}  // namespace reenroll
