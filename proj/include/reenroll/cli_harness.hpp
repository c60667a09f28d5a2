#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reenroll/inference.hpp"
#include "reenroll/simgen.hpp"
#include "reenroll/trial_data.hpp"

namespace reenroll {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kWorkersEnv = "REENROLL_WORKERS";

enum class ExitCode : int { ok = 0, failure = 1, validation = 2, estimation = 3 };

enum class ReportFormat { json, csv, text };
std::optional<ReportFormat> parse_format(std::string_view s);

struct AnalyzeRequest {
  std::string data_path;
  std::string schema_path;
  std::string scheme_path;
  std::vector<std::pair<std::string, std::string>> comparisons;  // (j, k)
  std::vector<std::string> methods;  // ipw ... aps, anova, ancova, anhecova
  std::optional<int> episode;        // nullopt: all episodes
  std::vector<std::string> covariates;
  bool intercept_only = false;
  Pooling pooling = Pooling::per_episode;
  double level = 0.95;
  std::optional<double> margin;
  MissingnessPolicy missingness = MissingnessPolicy::complete_case_record;
  ParticipantSet participants = ParticipantSet::ece_union;
  std::string output;    // empty: stdout
  ReportFormat format = ReportFormat::json;
  std::string manifest;  // empty: derived from output
};

struct SimulateRequest {
  SimConfig config;
  std::string config_path;  // recorded in the manifest when set
  std::optional<std::size_t> oracle_draws;
  std::string truth_file;
  int workers = 0;
  std::vector<std::string> methods;  // filter on method labels; empty = all
  std::string output;
  ReportFormat format = ReportFormat::csv;
  std::string manifest;
  std::size_t dump_reps = 0;  // write the first k generated datasets
  std::string dump_dir;
};

struct OracleRequest {
  SimConfig config;
  std::string config_path;
  std::size_t draws = 10'000'000;
  int workers = 0;
  std::string output;
  ReportFormat format = ReportFormat::json;
};

struct ValidateRequest {
  std::string data_path;
  std::string schema_path;
  std::string scheme_path;
  MissingnessPolicy missingness = MissingnessPolicy::complete_case_record;
};

/// Parses "2v1" or "2:1".
std::pair<std::string, std::string> parse_comparison(std::string_view s);

std::string sha256_hex(std::string_view bytes);

/// Each command writes diagnostics to `err` and returns the process exit code.
int cmd_analyze(const AnalyzeRequest& req, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateRequest& req, std::ostream& out, std::ostream& err);
int cmd_oracle(const OracleRequest& req, std::ostream& out, std::ostream& err);
int cmd_validate(const ValidateRequest& req, std::ostream& out, std::ostream& err);

/// Worker count from REENROLL_WORKERS, 0 when unset or invalid.
int default_workers();

/// Full command line (CLI11); `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace reenroll
