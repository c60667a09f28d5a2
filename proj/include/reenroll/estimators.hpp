#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reenroll/scheme.hpp"
#include "reenroll/trial_data.hpp"
#include "reenroll/working_models.hpp"

namespace reenroll {

enum class Method { ipw, sipw, aipw, ps, aps };

inline constexpr Method kAllMethods[] = {Method::ipw, Method::sipw, Method::aipw, Method::ps,
                                         Method::aps};

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view s);
inline bool is_adjusted(Method m) { return m == Method::aipw || m == Method::aps; }
inline bool is_stratified(Method m) { return m == Method::ps || m == Method::aps; }

/// ECE populations, strata and the participant-level analysis set for one
/// comparison (j, k) over a set of episodes. Holds references to the
/// DesignResolution and its RecordSet, which must outlive the frame.
class AnalysisFrame {
 public:
  /// `episodes` empty means every episode present in the data.
  AnalysisFrame(const DesignResolution& design, std::string arm_j, std::string arm_k,
                std::vector<int> episodes = {});

  const RecordSet& records() const { return design_->records(); }
  const DesignResolution& design() const { return *design_; }
  const std::string& arm_j() const { return arm_j_; }
  const std::string& arm_k() const { return arm_k_; }
  std::span<const int> episodes() const { return episodes_; }

  /// One population and its strata per requested episode (possibly empty).
  std::span<const EcePopulation> populations() const { return pops_; }
  std::span<const StrataPartition> strata() const { return strata_; }

  /// n_jk: person-episodes summed over the requested episodes.
  std::size_t n_person_episodes() const { return n_jk_; }

  /// Participants in at least one requested ECE population, in RecordSet order.
  std::span<const std::size_t> analysis_participants() const { return analysis_; }
  std::size_t n_analysis() const { return analysis_.size(); }
  /// Analysis row of member m of population slot s.
  std::size_t row_of(std::size_t slot, std::size_t member) const { return rows_[slot][member]; }

  /// True when `arm` is j, false when it is k; throws otherwise.
  bool focal_is_j(std::string_view arm) const;
  double pi(std::size_t slot, std::size_t member, bool focal_j) const {
    return focal_j ? pops_[slot].pi_j[member] : pops_[slot].pi_k[member];
  }

  std::string label() const { return arm_j_ + "v" + arm_k_; }

 private:
  const DesignResolution* design_;
  std::string arm_j_;
  std::string arm_k_;
  std::vector<int> episodes_;
  std::vector<EcePopulation> pops_;
  std::vector<StrataPartition> strata_;
  std::vector<std::vector<std::size_t>> rows_;
  std::vector<std::size_t> analysis_;
  std::size_t n_jk_ = 0;
};

/// mu-hat evaluated at every member of every population slot of a frame.
using MemberPredictions = std::vector<std::vector<double>>;

MemberPredictions zero_predictions(const AnalysisFrame& frame);
/// Throws Error(estimation) listing members whose covariates are missing.
MemberPredictions predict_members(const AnalysisFrame& frame, const ArmWorkingModels& models);

struct StratumSummary {
  int id = 0;
  double pi_j = 0.0;
  double pi_k = 0.0;
  std::size_t n = 0;
  std::size_t n_arm = 0;  // members assigned the focal arm
};

struct EpisodeComponent {
  int episode = 0;
  std::size_t size = 0;   // |I_jkt|
  std::size_t n_arm = 0;  // members assigned the focal arm
  std::optional<double> theta;  // undefined when the episode cannot support it
  std::vector<StratumSummary> strata;
};

/// theta-hat for the focal arm over the comparison's ECE populations.
struct ArmMeanEstimate {
  Method method = Method::ipw;
  std::string arm;
  std::string other_arm;
  std::vector<int> episodes;
  double value = 0.0;
  std::vector<EpisodeComponent> per_episode;
  std::size_t n_jk = 0;
};

ArmMeanEstimate estimate_ipw(const AnalysisFrame& frame, std::string_view arm);
ArmMeanEstimate estimate_sipw(const AnalysisFrame& frame, std::string_view arm);
ArmMeanEstimate estimate_aipw(const AnalysisFrame& frame, std::string_view arm,
                              const MemberPredictions& mu);
ArmMeanEstimate estimate_ps(const AnalysisFrame& frame, std::string_view arm);
ArmMeanEstimate estimate_aps(const AnalysisFrame& frame, std::string_view arm,
                             const MemberPredictions& mu);

/// Dispatch; `mu` is required for aipw and aps and ignored otherwise.
ArmMeanEstimate estimate_arm_mean(Method method, const AnalysisFrame& frame, std::string_view arm,
                                  const MemberPredictions* mu = nullptr);

struct AdjustmentOptions {
  std::vector<std::string> covariates;  // empty: intercept-only working model
  Pooling pooling = Pooling::per_episode;
};

struct ContrastEstimate {
  Method method = Method::ipw;
  std::string comparison;  // "jvk"
  double value = 0.0;      // theta_jk - theta_kj
  ArmMeanEstimate jk;
  ArmMeanEstimate kj;
  MemberPredictions mu_j;  // empty for unadjusted methods
  MemberPredictions mu_k;
};

/// Fits working models when the method needs them, then both arm means.
ContrastEstimate estimate_contrast(Method method, const AnalysisFrame& frame,
                                   const AdjustmentOptions& options = {});

/// Working-model predictions for arm `arm` of the frame (fit + predict).
MemberPredictions fit_member_predictions(const AnalysisFrame& frame, std::string_view arm,
                                         const AdjustmentOptions& options);

}  // namespace reenroll
