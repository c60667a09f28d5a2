#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reenroll/estimators.hpp"

namespace reenroll {

/// Which participants form the rows of the influence table.
///  - ece_union: participants in at least one requested ECE population.
///  - all_participants: every participant of the RecordSet; the extra rows
///    are zeros and n grows accordingly.
enum class ParticipantSet { ece_union, all_participants };

/// Per-participant plug-in influence values, episode contributions summed
/// within participant.
struct InfluenceTable {
  Method method = Method::ipw;
  std::string arm_j;
  std::string arm_k;
  std::vector<std::string> participant_ids;
  std::vector<double> phi_jk;
  std::vector<double> phi_kj;

  std::size_t n() const { return phi_jk.size(); }
};

/// Influence values of one arm-mean estimate, one per analysis row of the
/// frame. `mu` must be the predictions the estimate was computed with.
std::vector<double> arm_influence(const AnalysisFrame& frame, const ArmMeanEstimate& est,
                                  const MemberPredictions* mu = nullptr);

InfluenceTable influence_values(const AnalysisFrame& frame, const ContrastEstimate& contrast,
                                ParticipantSet rows = ParticipantSet::ece_union);

struct VarianceReport {
  double var_jk = 0.0;  // Var(theta_jk)
  double var_kj = 0.0;
  double cov = 0.0;
  double var_contrast = 0.0;            // sample variance of phi_jk - phi_kj, over n
  double var_contrast_quadratic = 0.0;  // (1,-1) Cov (1,-1)^T
  double se = 0.0;                      // sqrt(var_contrast)
  std::size_t n = 0;

  /// Smallest eigenvalue of the 2x2 covariance.
  double min_eigenvalue() const;
};

/// Sample variance (n - 1 divisor) of the per-participant values, over n.
VarianceReport cluster_robust_variance(const InfluenceTable& table);

/// Two-sided quantile of the standard normal: z such that P(|Z| <= z) = level.
double normal_two_sided_quantile(double level);

std::pair<double, double> confidence_interval(double estimate, double se, double level);
std::pair<double, double> confidence_interval(const ContrastEstimate& contrast,
                                              const VarianceReport& var, double level);

struct NonInferiorityReport {
  double lower = 0.0;
  double margin = 0.0;
  double z = 0.0;  // (estimate - margin) / se
  double level = 0.95;
  bool non_inferior = false;
};

/// Non-inferior iff the lower confidence bound is strictly above the margin.
NonInferiorityReport noninferiority_test(double estimate, double se, double margin,
                                         double level = 0.95);

/// Everything the report layer needs for one method x comparison.
struct ComparisonAnalysis {
  ContrastEstimate contrast;
  InfluenceTable influence;
  VarianceReport variance;
  std::pair<double, double> ci;
  double level = 0.95;
  std::optional<NonInferiorityReport> noninferiority;
};

ComparisonAnalysis analyze_comparison(Method method, const AnalysisFrame& frame,
                                      const AdjustmentOptions& options = {}, double level = 0.95,
                                      std::optional<double> margin = std::nullopt,
                                      ParticipantSet rows = ParticipantSet::ece_union);

}  // namespace reenroll
