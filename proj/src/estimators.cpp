#include "reenroll/estimators.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "reenroll/compensated_sum.hpp"
#include "reenroll/error.hpp"

namespace reenroll {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::ipw: return "ipw";
    case Method::sipw: return "sipw";
    case Method::aipw: return "aipw";
    case Method::ps: return "ps";
    case Method::aps: return "aps";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view s) {
  for (auto m : kAllMethods) {
    if (method_name(m) == s) return m;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// AnalysisFrame

AnalysisFrame::AnalysisFrame(const DesignResolution& design, std::string arm_j,
                             std::string arm_k, std::vector<int> episodes)
    : design_(&design), arm_j_(std::move(arm_j)), arm_k_(std::move(arm_k)),
      episodes_(std::move(episodes)) {
  const auto& rs = design.records();
  if (episodes_.empty()) {
    for (int t = 1; t <= rs.max_episode(); ++t) episodes_.push_back(t);
  }
  std::sort(episodes_.begin(), episodes_.end());
  episodes_.erase(std::unique(episodes_.begin(), episodes_.end()), episodes_.end());

  std::vector<std::size_t> row_of_participant(rs.n_participants(), SIZE_MAX);
  std::vector<bool> in_analysis(rs.n_participants(), false);
  for (int t : episodes_) {
    if (t < 1) fail(ErrorKind::config, fmt::format("episode {} is not >= 1", t));
    pops_.push_back(ece_population(design, arm_j_, arm_k_, t));
    strata_.push_back(derive_strata(pops_.back()));
    n_jk_ += pops_.back().size();
    for (auto i : pops_.back().members) in_analysis[rs.participant_of(i)] = true;
  }
  for (std::size_t p = 0; p < rs.n_participants(); ++p) {
    if (in_analysis[p]) {
      row_of_participant[p] = analysis_.size();
      analysis_.push_back(p);
    }
  }
  rows_.resize(pops_.size());
  for (std::size_t s = 0; s < pops_.size(); ++s) {
    rows_[s].reserve(pops_[s].size());
    for (auto i : pops_[s].members) rows_[s].push_back(row_of_participant[rs.participant_of(i)]);
  }
}

bool AnalysisFrame::focal_is_j(std::string_view arm) const {
  if (arm == arm_j_) return true;
  if (arm == arm_k_) return false;
  fail(ErrorKind::config,
       fmt::format("arm '{}' is not part of comparison {}", arm, label()));
}

MemberPredictions zero_predictions(const AnalysisFrame& frame) {
  MemberPredictions mu;
  for (const auto& pop : frame.populations()) mu.emplace_back(pop.size(), 0.0);
  return mu;
}

MemberPredictions predict_members(const AnalysisFrame& frame, const ArmWorkingModels& models) {
  const auto& rs = frame.records();
  MemberPredictions mu;
  std::vector<std::string> undefined;
  for (const auto& pop : frame.populations()) {
    auto& out = mu.emplace_back(pop.size(), 0.0);
    if (pop.size() == 0) continue;
    auto it = models.by_episode.find(pop.episode);
    if (it == models.by_episode.end()) {
      fail(ErrorKind::estimation,
           fmt::format("no working model for arm {} at episode {}", models.arm, pop.episode));
    }
    for (std::size_t m = 0; m < pop.size(); ++m) {
      const auto& r = rs[pop.members[m]];
      if (!it->second.try_predict(r, out[m])) {
        undefined.push_back(fmt::format("{}@episode{}", r.participant_id, r.episode));
      }
    }
  }
  if (!undefined.empty()) {
    std::string msg = "working model undefined (missing covariate) for members:";
    for (const auto& u : undefined) msg += " " + u;
    fail(ErrorKind::estimation, msg);
  }
  return mu;
}

MemberPredictions fit_member_predictions(const AnalysisFrame& frame, std::string_view arm,
                                         const AdjustmentOptions& options) {
  std::vector<EcePopulation> nonempty;
  for (const auto& pop : frame.populations()) {
    if (pop.size() > 0) nonempty.push_back(pop);
  }
  const auto models =
      fit_working_model(frame.records(), nonempty, arm, options.covariates, options.pooling);
  return predict_members(frame, models);
}

// ---------------------------------------------------------------------------
// Estimators

namespace {

double outcome_of(const EpisodeRecord& r) {
  if (!r.outcome) {
    fail(ErrorKind::validation,
         fmt::format("participant '{}' episode {}: missing outcome (apply a missingness policy first)",
                     r.participant_id, r.episode));
  }
  return *r.outcome;
}

ArmMeanEstimate skeleton(Method method, const AnalysisFrame& frame, std::string_view arm) {
  const bool fj = frame.focal_is_j(arm);
  ArmMeanEstimate est;
  est.method = method;
  est.arm = std::string(arm);
  est.other_arm = fj ? frame.arm_k() : frame.arm_j();
  est.episodes.assign(frame.episodes().begin(), frame.episodes().end());
  est.n_jk = frame.n_person_episodes();
  if (est.n_jk == 0) {
    fail(ErrorKind::estimation,
         fmt::format("ECE population for {} is empty at every requested episode", frame.label()));
  }
  return est;
}

void check_predictions(const AnalysisFrame& frame, const MemberPredictions& mu) {
  const auto pops = frame.populations();
  bool ok = mu.size() == pops.size();
  for (std::size_t s = 0; ok && s < pops.size(); ++s) ok = mu[s].size() == pops[s].size();
  if (!ok) fail(ErrorKind::estimation, "working-model predictions do not match the analysis frame");
}

// Weighting family. `mu` null means no augmentation.
ArmMeanEstimate weighting(Method method, const AnalysisFrame& frame, std::string_view arm,
                          const MemberPredictions* mu) {
  auto est = skeleton(method, frame, arm);
  const bool fj = frame.focal_is_j(arm);
  const auto& rs = frame.records();
  const auto pops = frame.populations();
  if (mu) check_predictions(frame, *mu);

  CompensatedSum total, weights;
  for (std::size_t s = 0; s < pops.size(); ++s) {
    const auto& pop = pops[s];
    CompensatedSum ep_total, ep_weights;
    EpisodeComponent comp{pop.episode, pop.size(), 0, std::nullopt, {}};
    for (std::size_t m = 0; m < pop.size(); ++m) {
      const auto& r = rs[pop.members[m]];
      const double p = frame.pi(s, m, fj);
      double term = 0.0;
      if (r.arm == arm) {
        ++comp.n_arm;
        const double resid = outcome_of(r) - (mu ? (*mu)[s][m] : 0.0);
        term = resid / p;
        weights += 1.0 / p;
        ep_weights += 1.0 / p;
      }
      if (mu) term += (*mu)[s][m];
      total += term;
      ep_total += term;
    }
    if (method == Method::sipw) {
      if (comp.n_arm > 0) comp.theta = ep_total.value() / ep_weights.value();
    } else if (pop.size() > 0) {
      comp.theta = ep_total.value() / static_cast<double>(pop.size());
    }
    est.per_episode.push_back(std::move(comp));
  }
  if (method == Method::sipw) {
    if (weights.value() <= 0.0) {
      fail(ErrorKind::estimation,
           fmt::format("no treated units: no arm-{} members in the ECE populations of {}", arm,
                       frame.label()));
    }
    est.value = total.value() / weights.value();
  } else {
    est.value = total.value() / static_cast<double>(est.n_jk);
  }
  return est;
}

ArmMeanEstimate stratified(Method method, const AnalysisFrame& frame, std::string_view arm,
                           const MemberPredictions* mu) {
  auto est = skeleton(method, frame, arm);
  const bool fj = frame.focal_is_j(arm);
  const auto& rs = frame.records();
  const auto pops = frame.populations();
  const auto strata = frame.strata();
  if (mu) check_predictions(frame, *mu);

  CompensatedSum total;
  for (std::size_t s = 0; s < pops.size(); ++s) {
    const auto& pop = pops[s];
    CompensatedSum ep_total;
    EpisodeComponent comp{pop.episode, pop.size(), 0, std::nullopt, {}};
    for (const auto& st : strata[s].strata) {
      StratumSummary sum{st.id, fj ? st.pi_j : st.pi_k, fj ? st.pi_k : st.pi_j,
                         st.positions.size(), 0};
      CompensatedSum resid;
      for (auto m : st.positions) {
        const auto& r = rs[pop.members[m]];
        if (r.arm != arm) continue;
        ++sum.n_arm;
        resid += outcome_of(r) - (mu ? (*mu)[s][m] : 0.0);
      }
      if (sum.n_arm == 0) {
        fail(ErrorKind::estimation,
             fmt::format("empty-arm stratum: no arm-{} members in stratum h={} (j={}, k={}, t={}, "
                         "pi_j={}, pi_k={}, n={})",
                         arm, st.id, frame.arm_j(), frame.arm_k(), pop.episode, st.pi_j, st.pi_k,
                         sum.n));
      }
      const double term =
          static_cast<double>(sum.n) / static_cast<double>(sum.n_arm) * resid.value();
      total += term;
      ep_total += term;
      comp.n_arm += sum.n_arm;
      comp.strata.push_back(sum);
    }
    if (mu) {
      for (std::size_t m = 0; m < pop.size(); ++m) {
        total += (*mu)[s][m];
        ep_total += (*mu)[s][m];
      }
    }
    if (pop.size() > 0) comp.theta = ep_total.value() / static_cast<double>(pop.size());
    est.per_episode.push_back(std::move(comp));
  }
  est.value = total.value() / static_cast<double>(est.n_jk);
  return est;
}

}  // namespace

ArmMeanEstimate estimate_ipw(const AnalysisFrame& frame, std::string_view arm) {
  return weighting(Method::ipw, frame, arm, nullptr);
}

ArmMeanEstimate estimate_sipw(const AnalysisFrame& frame, std::string_view arm) {
  return weighting(Method::sipw, frame, arm, nullptr);
}

ArmMeanEstimate estimate_aipw(const AnalysisFrame& frame, std::string_view arm,
                              const MemberPredictions& mu) {
  return weighting(Method::aipw, frame, arm, &mu);
}

ArmMeanEstimate estimate_ps(const AnalysisFrame& frame, std::string_view arm) {
  return stratified(Method::ps, frame, arm, nullptr);
}

ArmMeanEstimate estimate_aps(const AnalysisFrame& frame, std::string_view arm,
                             const MemberPredictions& mu) {
  return stratified(Method::aps, frame, arm, &mu);
}

ArmMeanEstimate estimate_arm_mean(Method method, const AnalysisFrame& frame, std::string_view arm,
                                  const MemberPredictions* mu) {
  if (is_adjusted(method) && !mu) {
    fail(ErrorKind::config, fmt::format("{} needs working-model predictions", method_name(method)));
  }
  switch (method) {
    case Method::ipw: return estimate_ipw(frame, arm);
    case Method::sipw: return estimate_sipw(frame, arm);
    case Method::aipw: return estimate_aipw(frame, arm, *mu);
    case Method::ps: return estimate_ps(frame, arm);
    case Method::aps: return estimate_aps(frame, arm, *mu);
  }
  fail(ErrorKind::config, "unknown method");
}

ContrastEstimate estimate_contrast(Method method, const AnalysisFrame& frame,
                                   const AdjustmentOptions& options) {
  ContrastEstimate c;
  c.method = method;
  c.comparison = frame.label();
  if (is_adjusted(method)) {
    c.mu_j = fit_member_predictions(frame, frame.arm_j(), options);
    c.mu_k = fit_member_predictions(frame, frame.arm_k(), options);
  }
  c.jk = estimate_arm_mean(method, frame, frame.arm_j(), is_adjusted(method) ? &c.mu_j : nullptr);
  c.kj = estimate_arm_mean(method, frame, frame.arm_k(), is_adjusted(method) ? &c.mu_k : nullptr);
  c.value = c.jk.value - c.kj.value;
  return c;
}

}  // namespace reenroll
