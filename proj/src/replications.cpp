#include <cmath>
#include <exception>
#include <map>
#include <optional>

#include <fmt/format.h>
#include <omp.h>

#include "reenroll/compensated_sum.hpp"
#include "reenroll/error.hpp"
#include "reenroll/inference.hpp"
#include "reenroll/simgen.hpp"

namespace reenroll {

namespace {

// The simulation's working models omit x_cat on purpose (misspecified).
const std::vector<std::string> kSimCovariates = {"x_c", "x_b"};

std::string substudy_of(std::string_view treated) { return treated == "2" ? "HS" : "DA"; }

}  // namespace

std::string Cell::method_label() const {
  return std::string(kind == CellKind::substudy ? substudy_method_name(substudy_method)
                                                 : method_name(method));
}

std::string Cell::comparison_label() const {
  std::string base = treated + "v" + control;
  switch (kind) {
    case CellKind::proposed: return base;
    case CellKind::episode1: return base + ":episode1";
    case CellKind::substudy: return base + ":substudy=" + substudy_of(treated);
  }
  return base;
}

std::vector<Cell> default_cells() {
  std::vector<Cell> cells;
  for (const char* j : {"2", "3"}) {
    for (auto kind : {CellKind::proposed, CellKind::episode1}) {
      for (auto m : kAllMethods) cells.push_back(Cell{kind, m, SubstudyMethod::anova, j, "1"});
    }
    for (auto m : kAllSubstudyMethods) {
      cells.push_back(Cell{CellKind::substudy, Method::ipw, m, j, "1"});
    }
  }
  return cells;
}

const SummaryRow& MonteCarloSummary::row(std::string_view method, std::string_view comparison) const {
  for (const auto& r : rows) {
    if (r.method == method && r.comparison == comparison) return r;
  }
  fail(ErrorKind::config, fmt::format("summary has no row {} / {}", method, comparison));
}

std::vector<CellOutcome> run_replication(const SimConfig& cfg, std::span<const Cell> cells,
                                         std::uint32_t rep, double level) {
  (void)level;
  const SimTrial trial = generate_trial(cfg, rep);
  const AssignmentScheme scheme = simulation_scheme(cfg);
  const DesignResolution design(scheme, trial.records);
  const AdjustmentOptions adj{kSimCovariates, Pooling::per_episode};

  // Frames and working-model predictions are shared by the cells of a
  // comparison; they are built lazily so a failing fit only affects the
  // adjusted cells.
  struct FrameCache {
    std::optional<AnalysisFrame> frame;
    bool mu_tried = false;
    std::optional<std::pair<MemberPredictions, MemberPredictions>> mu;
  };
  std::map<std::string, FrameCache> frames;

  std::vector<CellOutcome> out(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Cell& cell = cells[c];
    try {
      if (cell.kind == CellKind::substudy) {
        const auto est = substudy_comparator(cell.substudy_method, trial.records,
                                             substudy_of(cell.treated), cell.treated, cell.control,
                                             kSimCovariates);
        out[c] = CellOutcome{true, est.value, est.se};
        continue;
      }
      auto& fc = frames[cell.comparison_label()];
      if (!fc.frame) {
        std::vector<int> episodes;
        if (cell.kind == CellKind::episode1) episodes = {1};
        fc.frame.emplace(design, cell.treated, cell.control, episodes);
      }
      const AnalysisFrame& frame = *fc.frame;
      ContrastEstimate ce;
      ce.method = cell.method;
      ce.comparison = frame.label();
      if (is_adjusted(cell.method)) {
        if (!fc.mu_tried) {
          fc.mu_tried = true;
          fc.mu.emplace(fit_member_predictions(frame, frame.arm_j(), adj),
                        fit_member_predictions(frame, frame.arm_k(), adj));
        }
        if (!fc.mu) fail(ErrorKind::estimation, "working model could not be fitted");
        ce.mu_j = fc.mu->first;
        ce.mu_k = fc.mu->second;
      }
      const bool a = is_adjusted(cell.method);
      ce.jk = estimate_arm_mean(cell.method, frame, frame.arm_j(), a ? &ce.mu_j : nullptr);
      ce.kj = estimate_arm_mean(cell.method, frame, frame.arm_k(), a ? &ce.mu_k : nullptr);
      ce.value = ce.jk.value - ce.kj.value;
      const auto var = cluster_robust_variance(influence_values(frame, ce));
      out[c] = CellOutcome{true, ce.value, var.se};
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::estimation) throw;
      out[c] = CellOutcome{};
    }
  }
  return out;
}

MonteCarloSummary summarize(std::span<const Cell> cells, const TruthTable& truth,
                            std::vector<std::vector<CellOutcome>> per_rep, double level) {
  const double z = normal_two_sided_quantile(level);
  MonteCarloSummary s;
  s.reps = per_rep.size();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    SummaryRow row;
    row.method = cells[c].method_label();
    row.comparison = cells[c].comparison_label();
    row.truth = truth.at(row.comparison).value;
    CompensatedSum sum_est, sum_se;
    std::size_t covered = 0;
    for (const auto& rep : per_rep) {
      const auto& o = rep[c];
      if (!o.ok) {
        ++row.failures;
        continue;
      }
      ++row.reps_used;
      sum_est += o.estimate;
      sum_se += o.se;
      if (std::fabs(o.estimate - row.truth) <= z * o.se) ++covered;
    }
    if (row.reps_used > 0) {
      const double m = static_cast<double>(row.reps_used);
      const double mean = sum_est.value() / m;
      row.bias = mean - row.truth;
      row.mean_se = sum_se.value() / m;
      row.cp = static_cast<double>(covered) / m;
      if (row.reps_used > 1) {
        CompensatedSum ss;
        for (const auto& rep : per_rep) {
          if (rep[c].ok) ss += (rep[c].estimate - mean) * (rep[c].estimate - mean);
        }
        row.sd = std::sqrt(ss.value() / (m - 1.0));
      }
    } else {
      row.bias = std::nan("");
      row.mean_se = std::nan("");
      row.cp = std::nan("");
    }
    s.rows.push_back(std::move(row));
  }
  s.per_rep = std::move(per_rep);
  return s;
}

MonteCarloSummary run_replications(const SimConfig& cfg, std::span<const Cell> cells,
                                   const TruthTable& truth, int workers, double level) {
  cfg.validate();
  std::vector<std::vector<CellOutcome>> per_rep(cfg.reps);
  const int threads = workers > 0 ? workers : omp_get_max_threads();
  // Exceptions cannot cross the OpenMP region; keep the first one per rep.
  std::vector<std::exception_ptr> errors(cfg.reps);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(cfg.reps); ++r) {
    const auto ru = static_cast<std::size_t>(r);
    try {
      per_rep[ru] = run_replication(cfg, cells, static_cast<std::uint32_t>(r), level);
    } catch (...) {
      errors[ru] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return summarize(cells, truth, std::move(per_rep), level);
}

MonteCarloSummary run_replications_serial(const SimConfig& cfg, std::span<const Cell> cells,
                                          const TruthTable& truth, double level) {
  cfg.validate();
  std::vector<std::vector<CellOutcome>> per_rep;
  per_rep.reserve(cfg.reps);
  for (std::size_t r = 0; r < cfg.reps; ++r) {
    per_rep.push_back(run_replication(cfg, cells, static_cast<std::uint32_t>(r), level));
  }
  return summarize(cells, truth, std::move(per_rep), level);
}

namespace {

std::string num(double v) { return std::isfinite(v) ? fmt::format("{:.6f}", v) : "NA"; }

}  // namespace

std::string summary_csv(const MonteCarloSummary& s) {
  std::string out = "method,comparison,truth,bias,sd,mean_se,cp,reps_used\n";
  for (const auto& r : s.rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.method, r.comparison, num(r.truth),
                       num(r.bias), r.sd ? num(*r.sd) : "NA", num(r.mean_se), num(r.cp),
                       r.reps_used);
  }
  return out;
}

std::string summary_text(const MonteCarloSummary& s) {
  std::string out = fmt::format("{:<10} {:<18} {:>8} {:>8} {:>8} {:>8} {:>6} {:>6} {:>5}\n",
                                "method", "comparison", "truth", "bias", "SD", "SE", "CP", "reps",
                                "fail");
  for (const auto& r : s.rows) {
    out += fmt::format("{:<10} {:<18} {:>8} {:>8} {:>8} {:>8} {:>6} {:>6} {:>5}\n", r.method,
                       r.comparison, num(r.truth).substr(0, 8), fmt::format("{:.3f}", r.bias),
                       r.sd ? fmt::format("{:.3f}", *r.sd) : "NA", fmt::format("{:.3f}", r.mean_se),
                       fmt::format("{:.3f}", r.cp), r.reps_used, r.failures);
  }
  return out;
}

}  // namespace reenroll
