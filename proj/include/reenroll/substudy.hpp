#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reenroll/trial_data.hpp"

namespace reenroll {

enum class SubstudyMethod { anova, ancova, anhecova };

inline constexpr SubstudyMethod kAllSubstudyMethods[] = {
    SubstudyMethod::anova, SubstudyMethod::ancova, SubstudyMethod::anhecova};

std::string_view substudy_method_name(SubstudyMethod m);
std::optional<SubstudyMethod> parse_substudy_method(std::string_view s);

/// Treatment effect within one substudy, analyzed as a stand-alone trial.
struct SubstudyEstimate {
  SubstudyMethod method = SubstudyMethod::anova;
  std::string substudy;
  std::string treated;
  std::string control;
  double value = 0.0;  // treated minus control
  double se = 0.0;     // heteroskedasticity-robust
  std::size_t n = 0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
};

/// anova: difference in arm means.
/// ancova: coefficient of the treatment indicator in Y ~ 1 + A + X, HC0 SE.
/// anhecova: coefficient of A in Y ~ 1 + A + Xc + A:Xc with Xc centered at
///   the pooled substudy mean; SE from its influence function
///   A/p (Y - m1) - (1-A)/(1-p) (Y - m0) + m1 - m0 - theta.
/// Each participant may appear at most once in the substudy.
SubstudyEstimate substudy_comparator(SubstudyMethod method, const RecordSet& rs,
                                     std::string_view substudy, std::string_view treated,
                                     std::string_view control,
                                     const std::vector<std::string>& covariates);

/// The unique substudy in which both arms occur; throws if none or several.
std::string infer_substudy(const RecordSet& rs, std::string_view treated,
                           std::string_view control);

}  // namespace reenroll
