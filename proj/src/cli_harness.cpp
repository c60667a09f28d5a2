#include "reenroll/cli_harness.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "reenroll/error.hpp"
#include "reenroll/substudy.hpp"

namespace reenroll {

using ojson = nlohmann::ordered_json;

std::optional<ReportFormat> parse_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  if (s == "text") return ReportFormat::text;
  return std::nullopt;
}

std::pair<std::string, std::string> parse_comparison(std::string_view s) {
  auto pos = s.find(':');
  if (pos == std::string_view::npos) pos = s.find('v');
  if (pos == std::string_view::npos || pos == 0 || pos + 1 >= s.size()) {
    fail(ErrorKind::config, fmt::format("comparison '{}' is not of the form jvk or j:k", s));
  }
  return {std::string(s.substr(0, pos)), std::string(s.substr(pos + 1))};
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

int default_workers() {
  const char* v = std::getenv(kWorkersEnv);
  if (!v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  return (end != v && *end == '\0' && n > 0 && n < 4096) ? static_cast<int>(n) : 0;
}

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                     tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
}

ExitCode exit_for(ErrorKind k) {
  return k == ErrorKind::estimation ? ExitCode::estimation : ExitCode::validation;
}

// Input digests are taken before anything is parsed, so they describe
// exactly the bytes the run saw.
class Manifest {
 public:
  explicit Manifest(std::string command) {
    j_["tool"] = "reenroll";
    j_["version"] = kToolVersion;
    j_["command"] = std::move(command);
    j_["started_at"] = utc_now();
    j_["inputs"] = ojson::object();
  }
  void input(const std::string& role, const std::string& path) {
    if (path.empty()) return;
    ojson e;
    e["path"] = path;
    try {
      e["sha256"] = sha256_hex(read_text_file(path));
    } catch (const Error&) {
      e["sha256"] = nullptr;
    }
    j_["inputs"][role] = e;
  }
  ojson& operator[](const char* key) { return j_[key]; }
  void write(const std::string& path, int status, std::ostream& err) {
    j_["finished_at"] = utc_now();
    j_["exit_status"] = status;
    std::ofstream f(path, std::ios::binary);
    if (!f) {
      err << "warning: cannot write manifest " << path << "\n";
      return;
    }
    f << j_.dump(2) << "\n";
  }

 private:
  ojson j_;
};

std::string manifest_path(const std::string& explicit_path, const std::string& output) {
  if (!explicit_path.empty()) return explicit_path;
  if (!output.empty()) return output + ".manifest.json";
  return "reenroll_manifest.json";
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::config, fmt::format("cannot write '{}'", path));
  f << text;
}

std::string fmt_num(double v) { return std::isfinite(v) ? fmt::format("{:.4f}", v) : "NA"; }

const char* pooling_name(Pooling p) { return p == Pooling::pooled ? "pooled" : "per-episode"; }

// ---------------------------------------------------------------------------
// analyze

struct ReportEntry {
  std::string method;
  std::string comparison;
  double estimate = 0.0;
  double se = 0.0;
  std::pair<double, double> ci;
  std::optional<NonInferiorityReport> ni;
  ojson detail;
};

ojson episode_counts(const AnalysisFrame& frame) {
  ojson eps = ojson::array();
  const auto& rs = frame.records();
  const auto pops = frame.populations();
  const auto strata = frame.strata();
  for (std::size_t s = 0; s < pops.size(); ++s) {
    const auto& pop = pops[s];
    std::size_t nj = 0, nk = 0;
    ojson st = ojson::array();
    for (const auto& h : strata[s].strata) {
      std::size_t hj = 0, hk = 0;
      for (auto m : h.positions) {
        const auto& arm = rs[pop.members[m]].arm;
        hj += arm == frame.arm_j();
        hk += arm == frame.arm_k();
      }
      nj += hj;
      nk += hk;
      st.push_back({{"id", h.id}, {"pi_j", h.pi_j}, {"pi_k", h.pi_k}, {"n", h.positions.size()},
                    {"n_j", hj}, {"n_k", hk}});
    }
    eps.push_back({{"episode", pop.episode}, {"n", pop.size()}, {"n_j", nj}, {"n_k", nk},
                   {"strata", st}});
  }
  return eps;
}

std::vector<ReportEntry> run_analysis(const AnalyzeRequest& req, const RecordSet& rs,
                                      const DesignResolution& design) {
  const AdjustmentOptions adj{req.covariates, req.pooling};
  std::vector<ReportEntry> entries;
  for (const auto& [j, k] : req.comparisons) {
    std::vector<int> eps;
    if (req.episode) eps = {*req.episode};
    std::optional<AnalysisFrame> frame;
    for (const auto& name : req.methods) {
      ReportEntry e;
      e.method = name;
      e.comparison = j + "v" + k;
      if (auto m = parse_method(name)) {
        if (!frame) frame.emplace(design, j, k, eps);
        const auto a = analyze_comparison(*m, *frame, adj, req.level, req.margin, req.participants);
        e.estimate = a.contrast.value;
        e.se = a.variance.se;
        e.ci = a.ci;
        e.ni = a.noninferiority;
        e.detail["theta_jk"] = a.contrast.jk.value;
        e.detail["theta_kj"] = a.contrast.kj.value;
        e.detail["var_jk"] = a.variance.var_jk;
        e.detail["var_kj"] = a.variance.var_kj;
        e.detail["cov"] = a.variance.cov;
        e.detail["n_participants"] = a.variance.n;
        e.detail["n_person_episodes"] = frame->n_person_episodes();
        e.detail["per_episode"] = episode_counts(*frame);
      } else {
        const auto sm = parse_substudy_method(name);
        const std::string sub = infer_substudy(rs, j, k);
        const auto s = substudy_comparator(*sm, rs, sub, j, k, req.covariates);
        e.estimate = s.value;
        e.se = s.se;
        e.ci = confidence_interval(s.value, s.se, req.level);
        if (req.margin) e.ni = noninferiority_test(s.value, s.se, *req.margin, req.level);
        e.detail["substudy"] = sub;
        e.detail["n_participants"] = s.n;
        e.detail["n_person_episodes"] = s.n;
        e.detail["n_treated"] = s.n_treated;
        e.detail["n_control"] = s.n_control;
      }
      entries.push_back(std::move(e));
    }
  }
  return entries;
}

std::string render_analysis(const AnalyzeRequest& req, const std::vector<ReportEntry>& entries,
                            const ValidationReport& vr) {
  if (req.format == ReportFormat::json) {
    ojson j;
    j["level"] = req.level;
    j["margin"] = req.margin ? ojson(*req.margin) : ojson(nullptr);
    j["dropped_records"] = vr.dropped_count;
    j["results"] = ojson::array();
    for (const auto& e : entries) {
      ojson r;
      r["method"] = e.method;
      r["comparison"] = e.comparison;
      r["estimate"] = e.estimate;
      r["se"] = e.se;
      r["ci"] = {e.ci.first, e.ci.second};
      r["level"] = req.level;
      for (const auto& [key, v] : e.detail.items()) r[key] = v;
      if (e.ni) {
        r["noninferiority"] = {{"margin", e.ni->margin}, {"lower", e.ni->lower},
                               {"z", e.ni->z}, {"non_inferior", e.ni->non_inferior}};
      }
      j["results"].push_back(std::move(r));
    }
    return j.dump(2) + "\n";
  }
  std::string s;
  if (req.format == ReportFormat::csv) {
    s = "method,comparison,estimate,se,ci_lower,ci_upper,n_participants,non_inferior\n";
    for (const auto& e : entries) {
      s += fmt::format("{},{},{},{},{},{},{},{}\n", e.method, e.comparison, e.estimate, e.se,
                       e.ci.first, e.ci.second, e.detail.value("n_participants", std::size_t{0}),
                       e.ni ? (e.ni->non_inferior ? "true" : "false") : "");
    }
    return s;
  }
  s = fmt::format("{:<9} {:<10} {:>10} {:>9} {:>10} {:>10} {:>6}{}\n", "method", "comparison",
                  "estimate", "SE", "CI lower", "CI upper", "n", req.margin ? "  NI" : "");
  for (const auto& e : entries) {
    s += fmt::format("{:<9} {:<10} {:>10} {:>9} {:>10} {:>10} {:>6}{}\n", e.method, e.comparison,
                     fmt_num(e.estimate), fmt_num(e.se), fmt_num(e.ci.first), fmt_num(e.ci.second),
                     e.detail.value("n_participants", std::size_t{0}),
                     e.ni ? (e.ni->non_inferior ? "  yes" : "  no") : "");
  }
  return s;
}

ojson analyze_config(const AnalyzeRequest& req) {
  ojson c;
  ojson comps = ojson::array();
  for (const auto& [j, k] : req.comparisons) comps.push_back(j + "v" + k);
  c["comparisons"] = comps;
  c["methods"] = req.methods;
  c["episode"] = req.episode ? ojson(*req.episode) : ojson("all");
  c["covariates"] = req.covariates;
  c["intercept_only"] = req.intercept_only;
  c["pooling"] = pooling_name(req.pooling);
  c["level"] = req.level;
  c["margin"] = req.margin ? ojson(*req.margin) : ojson(nullptr);
  c["missingness"] = req.missingness == MissingnessPolicy::fail ? "fail" : "complete-case";
  c["participants"] = req.participants == ParticipantSet::ece_union ? "ece" : "all";
  return c;
}

}  // namespace

int cmd_analyze(const AnalyzeRequest& req, std::ostream& out, std::ostream& err) {
  Manifest man("analyze");
  man.input("data", req.data_path);
  man.input("schema", req.schema_path);
  man.input("scheme", req.scheme_path);
  man["config"] = analyze_config(req);
  int code = 0;
  try {
    if (req.comparisons.empty()) fail(ErrorKind::config, "no comparisons requested");
    if (req.methods.empty()) fail(ErrorKind::config, "no methods requested");
    bool needs_substudy = false;
    for (const auto& m : req.methods) {
      const auto pm = parse_method(m);
      if (!pm && !parse_substudy_method(m)) fail(ErrorKind::config, fmt::format("unknown method '{}'", m));
      if (pm && is_adjusted(*pm) && req.covariates.empty() && !req.intercept_only) {
        fail(ErrorKind::config,
             fmt::format("method {} needs --covariates or an explicit --intercept-only", m));
      }
      needs_substudy = needs_substudy || !pm;
    }
    if (!(req.level > 0.0 && req.level < 1.0)) {
      fail(ErrorKind::config, fmt::format("confidence level {} is not in (0, 1)", req.level));
    }
    const Schema schema = Schema::from_json(read_text_file(req.schema_path));
    if (needs_substudy && !schema.substudy_column) {
      fail(ErrorKind::config, "anova/ancova/anhecova need a substudy column in the schema");
    }
    const AssignmentScheme scheme = AssignmentScheme::from_json(read_text_file(req.scheme_path));
    const RecordSet raw = parse_records_file(req.data_path, schema);
    const auto [rs, vr] = apply_missingness_policy(raw, req.missingness);
    for (const auto& w : vr.warnings) err << "warning: " << w.locator << ": " << w.message << "\n";
    const DesignResolution design(scheme, rs);
    const auto entries = run_analysis(req, rs, design);
    emit(render_analysis(req, entries, vr), req.output, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    code = static_cast<int>(exit_for(e.kind()));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = static_cast<int>(ExitCode::failure);
  }
  man.write(manifest_path(req.manifest, req.output), code, err);
  return code;
}

// ---------------------------------------------------------------------------
// simulate / oracle

namespace {

void dump_replication(const SimConfig& cfg, std::uint32_t rep, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto trial = generate_trial(cfg, rep);
  {
    std::ofstream f(fmt::format("{}/rep_{:05d}.csv", dir, rep), std::ios::binary);
    write_records(f, trial.records);
  }
  std::ofstream f(fmt::format("{}/rep_{:05d}_latent.csv", dir, rep), std::ios::binary);
  f << "participant_id,u,x_c1,x_c2,reenrolled,y1_1,y1_2,y1_3,y2_11,y2_12,y2_13,y2_21,y2_23,y2_31,y2_32\n";
  for (std::size_t i = 0; i < trial.latent.size(); ++i) {
    const auto& p = trial.latent[i];
    f << fmt::format("p{:06d},{},{},{},{},{},{}\n", i + 1, p.u, p.x_c1, p.x_c2, p.reenrolled ? 1 : 0,
                     fmt::join(p.y1.begin(), p.y1.end(), ","), fmt::join(p.y2.begin(), p.y2.end(), ","));
  }
}

std::string render_truth(const TruthTable& t, ReportFormat format) {
  if (format == ReportFormat::json) return t.to_json() + "\n";
  std::string s = format == ReportFormat::csv ? "estimand,truth,mc_se\n"
                                              : fmt::format("{:<18} {:>10} {:>10}\n", "estimand", "truth", "MC SE");
  for (const auto& [k, v] : t.values) {
    s += format == ReportFormat::csv
             ? fmt::format("{},{},{}\n", k, v.value, v.mc_se)
             : fmt::format("{:<18} {:>10.4f} {:>10.5f}\n", k, v.value, v.mc_se);
  }
  return s;
}

}  // namespace

int cmd_simulate(const SimulateRequest& req, std::ostream& out, std::ostream& err) {
  Manifest man("simulate");
  man.input("config", req.config_path);
  man.input("truth", req.truth_file);
  man["config"] = ojson::parse(req.config.to_json());
  man["seed"] = req.config.seed;
  man["workers"] = req.workers;
  int code = 0;
  try {
    req.config.validate();
    TruthTable truth;
    if (!req.truth_file.empty()) {
      truth = TruthTable::from_json(read_text_file(req.truth_file));
      man["truth_source"] = "file";
    } else {
      const std::size_t draws = req.oracle_draws.value_or(10'000'000);
      truth = truth_oracle(req.config, draws, req.workers);
      man["truth_source"] = fmt::format("oracle draws={}", draws);
    }
    man["truth"] = ojson::parse(truth.to_json());

    std::vector<Cell> cells;
    for (const auto& c : default_cells()) {
      bool keep = req.methods.empty();
      for (const auto& m : req.methods) keep = keep || c.method_label() == m;
      if (keep) cells.push_back(c);
    }
    if (cells.empty()) fail(ErrorKind::config, "no cells match the requested methods");

    for (std::size_t r = 0; r < std::min(req.dump_reps, req.config.reps); ++r) {
      dump_replication(req.config, static_cast<std::uint32_t>(r),
                       req.dump_dir.empty() ? "reps" : req.dump_dir);
    }

    const auto summary = run_replications(req.config, cells, truth, req.workers);
    std::string text;
    if (req.format == ReportFormat::csv) {
      text = summary_csv(summary);
    } else if (req.format == ReportFormat::text) {
      text = summary_text(summary);
    } else {
      ojson j;
      j["reps"] = summary.reps;
      j["rows"] = ojson::array();
      for (const auto& r : summary.rows) {
        j["rows"].push_back({{"method", r.method}, {"comparison", r.comparison}, {"truth", r.truth},
                             {"bias", r.bias}, {"sd", r.sd ? ojson(*r.sd) : ojson(nullptr)},
                             {"mean_se", r.mean_se}, {"cp", r.cp}, {"reps_used", r.reps_used},
                             {"failures", r.failures}});
      }
      text = j.dump(2) + "\n";
    }
    emit(text, req.output, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    code = static_cast<int>(exit_for(e.kind()));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = static_cast<int>(ExitCode::failure);
  }
  man.write(manifest_path(req.manifest, req.output), code, err);
  return code;
}

int cmd_oracle(const OracleRequest& req, std::ostream& out, std::ostream& err) {
  try {
    const auto t = truth_oracle(req.config, req.draws, req.workers);
    emit(render_truth(t, req.format), req.output, out);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(exit_for(e.kind()));
  }
}

int cmd_validate(const ValidateRequest& req, std::ostream& out, std::ostream& err) {
  try {
    const Schema schema = Schema::from_json(read_text_file(req.schema_path));
    const AssignmentScheme scheme = AssignmentScheme::from_json(read_text_file(req.scheme_path));
    const RecordSet raw = parse_records_file(req.data_path, schema);
    const auto [rs, vr] = apply_missingness_policy(raw, req.missingness);
    const DesignResolution design(scheme, rs);
    for (const auto& w : vr.warnings) err << "warning: " << w.locator << ": " << w.message << "\n";
    out << fmt::format("ok: {} records, {} participants, {} episodes max, arms {}; dropped {}\n",
                       rs.size(), rs.n_participants(), rs.max_episode(),
                       fmt::join(rs.arm_set().begin(), rs.arm_set().end(), ","), vr.dropped_count);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(exit_for(e.kind()));
  }
}

// ---------------------------------------------------------------------------
// Command line

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

struct SimOverrides {
  std::string config_path;
  std::optional<std::size_t> n, reps;
  std::optional<int> scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> truncation;
  bool sigma_is_variance = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "SimConfig JSON");
    app->add_option("--n", n, "participants per trial");
    app->add_option("--reps", reps, "replications");
    app->add_option("--scenario", scenario, "re-enrollment scenario (1 or 2)");
    app->add_option("--seed", seed, "64-bit seed");
    app->add_option("--truncation", truncation, "rejection|clamp");
    app->add_flag("--sigma-is-variance", sigma_is_variance, "read log_sigma as a variance");
  }
  SimConfig resolve() const {
    SimConfig c = config_path.empty() ? SimConfig{} : SimConfig::from_json(read_text_file(config_path));
    if (n) c.n = *n;
    if (reps) c.reps = *reps;
    if (scenario) c.scenario = *scenario;
    if (seed) c.seed = *seed;
    if (truncation) {
      if (*truncation == "clamp") c.truncation = Truncation::clamp;
      else if (*truncation == "rejection") c.truncation = Truncation::rejection;
      else fail(ErrorKind::config, fmt::format("unknown truncation '{}'", *truncation));
    }
    if (sigma_is_variance) c.sigma_is_variance = true;
    c.validate();
    return c;
  }
};

MissingnessPolicy parse_missing(const std::string& s) {
  if (s == "complete-case") return MissingnessPolicy::complete_case_record;
  if (s == "fail") return MissingnessPolicy::fail;
  fail(ErrorKind::config, fmt::format("unknown missingness policy '{}'", s));
}

ReportFormat require_format(const std::string& s) {
  auto f = parse_format(s);
  if (!f) fail(ErrorKind::config, fmt::format("unknown format '{}'", s));
  return *f;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Estimators for master protocols with participant re-enrollment", "reenroll"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // analyze
  auto* an = app.add_subcommand("analyze", "estimate added effects on a trial dataset");
  AnalyzeRequest areq;
  std::string a_compare = "2v1", a_methods = "ipw,sipw,aipw,ps,aps", a_episode = "all",
              a_cov, a_pooling = "per-episode", a_format = "json", a_missing = "complete-case",
              a_participants = "ece";
  std::optional<double> a_margin;
  an->add_option("--data", areq.data_path, "episode-level CSV")->required();
  an->add_option("--schema", areq.schema_path, "column-role JSON")->required();
  an->add_option("--scheme", areq.scheme_path, "assignment-scheme JSON")->required();
  // List options may be repeated or comma-separated.
  const auto join = CLI::MultiOptionPolicy::Join;
  an->add_option("--compare", a_compare, "comparisons, e.g. 2v1,3v1")
      ->capture_default_str()->delimiter(',')->multi_option_policy(join);
  an->add_option("--methods", a_methods, "ipw,sipw,aipw,ps,aps,anova,ancova,anhecova")
      ->capture_default_str()->delimiter(',')->multi_option_policy(join);
  an->add_option("--episode", a_episode, "all or a single episode number")->capture_default_str();
  an->add_option("--covariates", a_cov, "working-model covariates a,b,c")
      ->delimiter(',')->multi_option_policy(join);
  an->add_flag("--intercept-only", areq.intercept_only, "allow aipw/aps without covariates");
  an->add_option("--pooling", a_pooling, "per-episode|pooled")->capture_default_str();
  an->add_option("--level", areq.level, "confidence level")->capture_default_str();
  an->add_option("--margin", a_margin, "non-inferiority margin");
  an->add_option("--missing", a_missing, "complete-case|fail")->capture_default_str();
  an->add_option("--participants", a_participants, "ece|all (rows of the influence table)")->capture_default_str();
  an->add_option("--output,-o", areq.output, "report path (default stdout)");
  an->add_option("--format", a_format, "json|csv|text")->capture_default_str();
  an->add_option("--manifest", areq.manifest, "manifest path");

  // simulate
  auto* sim = app.add_subcommand("simulate", "replication study of the simulation design");
  SimulateRequest sreq;
  SimOverrides s_over;
  std::string s_truth, s_methods, s_format = "csv";
  sreq.workers = default_workers();
  s_over.add_to(sim);
  sim->add_option("--truth-from-oracle", s_truth, "draws=N (default 10^7)");
  sim->add_option("--truth-file", sreq.truth_file, "truth table JSON");
  sim->add_option("--workers", sreq.workers, fmt::format("worker threads (default ${})", kWorkersEnv));
  sim->add_option("--methods", s_methods, "restrict to these method labels");
  sim->add_option("--output,-o", sreq.output, "summary path (default stdout)");
  sim->add_option("--format", s_format, "csv|json|text")->capture_default_str();
  sim->add_option("--manifest", sreq.manifest, "manifest path");
  sim->add_option("--dump-reps", sreq.dump_reps, "write the first k generated datasets");
  sim->add_option("--dump-dir", sreq.dump_dir, "directory for --dump-reps");

  // oracle
  auto* orc = app.add_subcommand("oracle", "Monte Carlo truth of the simulation estimands");
  OracleRequest oreq;
  SimOverrides o_over;
  std::string o_format = "json";
  oreq.workers = default_workers();
  o_over.add_to(orc);
  orc->add_option("--draws", oreq.draws, "participants drawn")->capture_default_str();
  orc->add_option("--workers", oreq.workers, "worker threads");
  orc->add_option("--output,-o", oreq.output, "output path (default stdout)");
  orc->add_option("--format", o_format, "json|csv|text")->capture_default_str();

  // validate
  auto* val = app.add_subcommand("validate", "check data against schema and scheme");
  ValidateRequest vreq;
  std::string v_missing = "complete-case";
  val->add_option("--data", vreq.data_path)->required();
  val->add_option("--schema", vreq.schema_path)->required();
  val->add_option("--scheme", vreq.scheme_path)->required();
  val->add_option("--missing", v_missing)->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    // Subcommand help arrives here too.
    if (e.get_exit_code() == 0) {
      out << (an->parsed() ? an->help() : sim->parsed() ? sim->help() : orc->parsed() ? orc->help() : val->help());
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::validation);
  }

  try {
    if (an->parsed()) {
      for (const auto& c : split_list(a_compare)) areq.comparisons.push_back(parse_comparison(c));
      areq.methods = split_list(a_methods);
      if (a_episode != "all") {
        try {
          areq.episode = std::stoi(a_episode);
        } catch (const std::exception&) {
          fail(ErrorKind::config, fmt::format("--episode '{}' is not 'all' or an integer", a_episode));
        }
      }
      areq.covariates = split_list(a_cov);
      if (a_pooling == "pooled") areq.pooling = Pooling::pooled;
      else if (a_pooling != "per-episode") fail(ErrorKind::config, fmt::format("unknown pooling '{}'", a_pooling));
      areq.margin = a_margin;
      areq.missingness = parse_missing(a_missing);
      if (a_participants == "all") areq.participants = ParticipantSet::all_participants;
      else if (a_participants != "ece") fail(ErrorKind::config, fmt::format("unknown participant set '{}'", a_participants));
      areq.format = require_format(a_format);
      return cmd_analyze(areq, out, err);
    }
    if (sim->parsed()) {
      sreq.config = s_over.resolve();
      sreq.config_path = s_over.config_path;
      if (!s_truth.empty()) {
        const std::string v = s_truth.rfind("draws=", 0) == 0 ? s_truth.substr(6) : s_truth;
        try {
          sreq.oracle_draws = static_cast<std::size_t>(std::stod(v));
        } catch (const std::exception&) {
          fail(ErrorKind::config, fmt::format("--truth-from-oracle '{}' is not draws=N", s_truth));
        }
      }
      if (sreq.oracle_draws && !sreq.truth_file.empty()) {
        fail(ErrorKind::config, "use either --truth-from-oracle or --truth-file");
      }
      sreq.methods = split_list(s_methods);
      sreq.format = require_format(s_format);
      return cmd_simulate(sreq, out, err);
    }
    if (orc->parsed()) {
      oreq.config = o_over.resolve();
      oreq.config_path = o_over.config_path;
      oreq.format = require_format(o_format);
      return cmd_oracle(oreq, out, err);
    }
    vreq.missingness = parse_missing(v_missing);
    return cmd_validate(vreq, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(exit_for(e.kind()));
  }
}

}  // namespace reenroll
