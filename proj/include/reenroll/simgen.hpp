#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reenroll/estimators.hpp"
#include "reenroll/scheme.hpp"
#include "reenroll/substudy.hpp"
#include "reenroll/trial_data.hpp"

namespace reenroll {

enum class Truncation { rejection, clamp };

/// Index of an (episode-1 arm, episode-2 arm) pair in the coefficient table:
/// (1,1) (1,2) (1,3) (2,1) (2,3) (3,1) (3,2). Returns -1 for unreachable pairs.
int arm_pair_index(int arm1, int arm2);

/// Generator of a two-substudy master protocol with re-enrollment.
/// Arm 1 is the shared control; substudy HS compares 2 vs 1, DA 3 vs 1.
/// Disease subtype x_cat 0/1/2 means HS only / DA only / both.
struct SimConfig {
  std::size_t n = 600;
  int scenario = 1;  // 1: random re-enrollment, 2: depends on U
  std::uint64_t seed = 20240601;
  std::size_t reps = 1000;

  double p_xb = 0.5;
  std::array<double, 3> p_cat{0.03, 0.24, 0.73};
  std::array<double, 3> log_mu{3.25, 3.1, 3.0};
  double log_sigma = 0.4;
  bool sigma_is_variance = false;
  double trunc_lo = 12.0;
  double trunc_hi = 70.0;
  Truncation truncation = Truncation::rejection;
  double p_ew1 = 5.0 / 6.0;

  // Substudy allocation of the HS+DA group by enrollment window, and the
  // within-substudy probability of the control arm.
  double p_hs_ew1 = 0.5;
  double p_hs_ew2 = 0.75;
  double p_control = 0.5;

  double coef_xb = 0.5;
  double coef_xc = 0.1;
  std::array<double, 3> beta{0.2, -1.0, -0.5};
  std::array<double, 3> delta{0.0, -2.0, 2.0};
  std::array<double, 7> beta_pair{0.2, -0.4, -0.15, -0.4, -0.75, -0.15, -0.75};
  std::array<double, 7> delta_pair{0.0, -1.5, 1.5, -1.0, 1.0, 0.5, -0.5};

  double reenroll_rate = 0.58;
  double gamma = -0.39;

  /// Throws Error(config) when a probability or count is out of range.
  void validate() const;

  /// Missing keys keep their defaults.
  static SimConfig from_json(std::string_view text);
  std::string to_json() const;
};

enum class Substudy : std::uint8_t { none, HS, DA };
std::string_view substudy_label(Substudy s);

/// Latent and observed draws for one participant.
struct LatentParticipant {
  int x_b = 0;
  int x_cat = 0;
  int ew = 1;
  double x_c1 = 0.0;
  double x_c2 = 0.0;
  double u = 0.0;
  double v = 0.0;
  Substudy substudy1 = Substudy::none;
  int arm1 = 1;
  bool reenrolled = false;
  Substudy substudy2 = Substudy::none;
  int arm2 = 0;  // 0 when not re-enrolled
  std::array<double, 3> y1{};  // episode-1 potential outcomes, arms 1..3
  std::array<double, 7> y2{};  // episode-2 potential outcomes by arm_pair_index

  double observed_y1() const { return y1[static_cast<std::size_t>(arm1 - 1)]; }
  double observed_y2() const { return y2[static_cast<std::size_t>(arm_pair_index(arm1, arm2))]; }
};

/// Draws participant `index` of replication `rep`; a pure function of
/// (cfg, rep, index).
LatentParticipant draw_participant(const SimConfig& cfg, std::uint32_t rep, std::uint32_t index);

/// Assignment probabilities over arms 1..3 at episode t (t = 2 only for
/// re-enrolled participants).
std::array<double, 3> assignment_probabilities(const SimConfig& cfg, const LatentParticipant& p,
                                               int episode);

Schema simulation_schema();
/// The assignment table implied by cfg, arms "1","2","3".
AssignmentScheme simulation_scheme(const SimConfig& cfg);

struct SimTrial {
  RecordSet records;
  std::vector<LatentParticipant> latent;
  std::size_t rows_emitted = 0;
  std::size_t reenrolled = 0;
};

SimTrial generate_trial(const SimConfig& cfg, std::uint32_t rep);

// ---------------------------------------------------------------------------
// Truth oracle

struct TruthValue {
  double value = 0.0;
  double mc_se = 0.0;
};

/// Keys: "2v1", "2v1:episode1", "2v1:episode2", "2v1:substudy=HS" and the
/// same for 3v1 (substudy DA).
struct TruthTable {
  std::size_t draws = 0;
  std::map<std::string, TruthValue> values;

  const TruthValue& at(const std::string& key) const;
  static TruthTable from_json(std::string_view text);
  std::string to_json() const;
};

inline constexpr std::uint32_t kOracleRep = 0xFFFFFFFFu;
inline constexpr std::size_t kOracleChunk = std::size_t{1} << 16;

/// Monte Carlo integration of the potential outcomes over `draws`
/// participants, parallel over fixed-size chunks reduced in chunk order, so
/// the result does not depend on the worker count. workers = 0 uses the
/// OpenMP default.
TruthTable truth_oracle(const SimConfig& cfg, std::size_t draws, int workers = 0);
/// Single-pass serial reference of truth_oracle.
TruthTable truth_oracle_serial(const SimConfig& cfg, std::size_t draws);

// ---------------------------------------------------------------------------
// Replications

enum class CellKind { proposed, episode1, substudy };

struct Cell {
  CellKind kind = CellKind::proposed;
  Method method = Method::ipw;
  SubstudyMethod substudy_method = SubstudyMethod::anova;
  std::string treated;
  std::string control;

  std::string method_label() const;
  /// Key into TruthTable, e.g. "2v1", "2v1:episode1", "2v1:substudy=HS".
  std::string comparison_label() const;
};

/// The full grid: five proposed + five episode-1-only + three substudy
/// estimators for 2v1 and 3v1.
std::vector<Cell> default_cells();

struct CellOutcome {
  bool ok = false;
  double estimate = 0.0;
  double se = 0.0;
};

struct SummaryRow {
  std::string method;
  std::string comparison;
  double truth = 0.0;
  double bias = 0.0;
  std::optional<double> sd;  // undefined with fewer than two replications
  double mean_se = 0.0;
  double cp = 0.0;
  std::size_t reps_used = 0;
  std::size_t failures = 0;
};

struct MonteCarloSummary {
  std::vector<SummaryRow> rows;
  std::size_t reps = 0;
  std::vector<std::vector<CellOutcome>> per_rep;  // [rep][cell]

  const SummaryRow& row(std::string_view method, std::string_view comparison) const;
};

/// One replication: generate, then estimate every cell. Failures of a cell
/// (e.g. an empty-arm stratum) are recorded, not thrown.
std::vector<CellOutcome> run_replication(const SimConfig& cfg, std::span<const Cell> cells,
                                         std::uint32_t rep, double level = 0.95);

/// Replications in parallel; outcomes are written to per-rep slots and
/// aggregated in replication order, so the result is bit-identical for any
/// worker count.
MonteCarloSummary run_replications(const SimConfig& cfg, std::span<const Cell> cells,
                                   const TruthTable& truth, int workers = 0,
                                   double level = 0.95);
/// Serial reference of run_replications.
MonteCarloSummary run_replications_serial(const SimConfig& cfg, std::span<const Cell> cells,
                                          const TruthTable& truth, double level = 0.95);

MonteCarloSummary summarize(std::span<const Cell> cells, const TruthTable& truth,
                            std::vector<std::vector<CellOutcome>> per_rep, double level = 0.95);

/// Columns: method,comparison,truth,bias,sd,mean_se,cp,reps_used
std::string summary_csv(const MonteCarloSummary& s);
std::string summary_text(const MonteCarloSummary& s);

}  // namespace reenroll
