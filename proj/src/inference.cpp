#include "reenroll/inference.hpp"

#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "reenroll/compensated_sum.hpp"
#include "reenroll/error.hpp"

namespace reenroll {

std::vector<double> arm_influence(const AnalysisFrame& frame, const ArmMeanEstimate& est,
                                  const MemberPredictions* mu) {
  const bool fj = frame.focal_is_j(est.arm);
  if (est.n_jk != frame.n_person_episodes() || est.per_episode.size() != frame.populations().size()) {
    fail(ErrorKind::estimation, "estimate was not computed on this analysis frame");
  }
  if (is_adjusted(est.method) && !mu) {
    fail(ErrorKind::estimation,
         fmt::format("{} influence values need the working-model predictions",
                     method_name(est.method)));
  }
  const auto& rs = frame.records();
  const auto pops = frame.populations();
  const auto strata = frame.strata();
  const double theta = est.value;
  // 1 / sum_t P(I_jkt = 1) replaced by n / n_jk.
  const double scale =
      static_cast<double>(frame.n_analysis()) / static_cast<double>(frame.n_person_episodes());

  std::vector<double> phi(frame.n_analysis(), 0.0);
  for (std::size_t s = 0; s < pops.size(); ++s) {
    const auto& pop = pops[s];
    if (!is_stratified(est.method)) {
      for (std::size_t m = 0; m < pop.size(); ++m) {
        const auto& r = rs[pop.members[m]];
        const bool treated = r.arm == est.arm;
        const double p = frame.pi(s, m, fj);
        double c = 0.0;
        switch (est.method) {
          case Method::ipw:
            c = (treated ? *r.outcome / p : 0.0) - theta;
            break;
          case Method::sipw:
            c = treated ? (*r.outcome - theta) / p : 0.0;
            break;
          case Method::aipw: {
            const double mu_m = (*mu)[s][m];
            c = (treated ? (*r.outcome - mu_m) / p : 0.0) + mu_m - theta;
            break;
          }
          default:
            break;
        }
        phi[frame.row_of(s, m)] += scale * c;
      }
      continue;
    }
    // Stratified: empirical P(A=j | G=h), stratum arm mean and mean of mu-hat.
    for (const auto& st : strata[s].strata) {
      CompensatedSum y_arm, mu_all;
      std::size_t n_arm = 0;
      for (auto m : st.positions) {
        const auto& r = rs[pop.members[m]];
        if (mu) mu_all += (*mu)[s][m];
        if (r.arm == est.arm) {
          ++n_arm;
          y_arm += *r.outcome;
        }
      }
      if (n_arm == 0) {
        fail(ErrorKind::estimation,
             fmt::format("empty-arm stratum h={} at episode {} for arm {}", st.id, pop.episode, est.arm));
      }
      const double n_h = static_cast<double>(st.positions.size());
      const double p_h = static_cast<double>(n_arm) / n_h;
      const double ybar = y_arm.value() / static_cast<double>(n_arm);
      const double mubar = mu ? mu_all.value() / n_h : 0.0;
      for (auto m : st.positions) {
        const auto& r = rs[pop.members[m]];
        const double mu_m = mu ? (*mu)[s][m] : 0.0;
        double c = ybar + mu_m - mubar - theta;
        if (r.arm == est.arm) c += (*r.outcome - mu_m + mubar - ybar) / p_h;
        phi[frame.row_of(s, m)] += scale * c;
      }
    }
  }
  return phi;
}

InfluenceTable influence_values(const AnalysisFrame& frame, const ContrastEstimate& contrast,
                                ParticipantSet rows) {
  if (contrast.comparison != frame.label()) {
    fail(ErrorKind::estimation, fmt::format("contrast {} does not belong to frame {}",
                                            contrast.comparison, frame.label()));
  }
  const bool adj = is_adjusted(contrast.method);
  auto phi_jk = arm_influence(frame, contrast.jk, adj ? &contrast.mu_j : nullptr);
  auto phi_kj = arm_influence(frame, contrast.kj, adj ? &contrast.mu_k : nullptr);
  const auto& rs = frame.records();

  InfluenceTable t;
  t.method = contrast.method;
  t.arm_j = frame.arm_j();
  t.arm_k = frame.arm_k();
  if (rows == ParticipantSet::ece_union) {
    for (auto p : frame.analysis_participants()) t.participant_ids.push_back(rs.participants()[p]);
    t.phi_jk = std::move(phi_jk);
    t.phi_kj = std::move(phi_kj);
    return t;
  }
  // The n / n_jk factor is recomputed with n = all participants.
  const double rescale = static_cast<double>(rs.n_participants()) /
                         static_cast<double>(frame.n_analysis());
  t.phi_jk.assign(rs.n_participants(), 0.0);
  t.phi_kj.assign(rs.n_participants(), 0.0);
  t.participant_ids.assign(rs.participants().begin(), rs.participants().end());
  const auto analysis = frame.analysis_participants();
  for (std::size_t row = 0; row < analysis.size(); ++row) {
    t.phi_jk[analysis[row]] = phi_jk[row] * rescale;
    t.phi_kj[analysis[row]] = phi_kj[row] * rescale;
  }
  return t;
}

double VarianceReport::min_eigenvalue() const {
  const double tr = var_jk + var_kj;
  const double det = var_jk * var_kj - cov * cov;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  return tr / 2.0 - disc;
}

VarianceReport cluster_robust_variance(const InfluenceTable& table) {
  const std::size_t n = table.n();
  if (n < 2) {
    fail(ErrorKind::estimation,
         fmt::format("cluster-robust variance needs at least 2 participants, got {}", n));
  }
  CompensatedSum s_jk, s_kj;
  for (std::size_t i = 0; i < n; ++i) {
    s_jk += table.phi_jk[i];
    s_kj += table.phi_kj[i];
  }
  const double nd = static_cast<double>(n);
  const double m_jk = s_jk.value() / nd;
  const double m_kj = s_kj.value() / nd;
  const double m_d = m_jk - m_kj;
  CompensatedSum ss_jk, ss_kj, sp, ss_d;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = table.phi_jk[i] - m_jk;
    const double b = table.phi_kj[i] - m_kj;
    const double d = (table.phi_jk[i] - table.phi_kj[i]) - m_d;
    ss_jk += a * a;
    ss_kj += b * b;
    sp += a * b;
    ss_d += d * d;
  }
  const double denom = (nd - 1.0) * nd;
  VarianceReport v;
  v.n = n;
  v.var_jk = ss_jk.value() / denom;
  v.var_kj = ss_kj.value() / denom;
  v.cov = sp.value() / denom;
  v.var_contrast = ss_d.value() / denom;
  v.var_contrast_quadratic = v.var_jk + v.var_kj - 2.0 * v.cov;
  v.se = std::sqrt(v.var_contrast);
  return v;
}

double normal_two_sided_quantile(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    fail(ErrorKind::config, fmt::format("confidence level {} is not in (0, 1)", level));
  }
  return boost::math::quantile(boost::math::normal_distribution<double>(), (1.0 + level) / 2.0);
}

std::pair<double, double> confidence_interval(double estimate, double se, double level) {
  const double z = normal_two_sided_quantile(level);
  return {estimate - z * se, estimate + z * se};
}

std::pair<double, double> confidence_interval(const ContrastEstimate& contrast,
                                              const VarianceReport& var, double level) {
  return confidence_interval(contrast.value, var.se, level);
}

NonInferiorityReport noninferiority_test(double estimate, double se, double margin, double level) {
  if (!std::isfinite(margin)) fail(ErrorKind::config, "non-inferiority margin must be finite");
  NonInferiorityReport r;
  r.margin = margin;
  r.level = level;
  r.lower = confidence_interval(estimate, se, level).first;
  r.z = se > 0.0 ? (estimate - margin) / se
                 : (estimate > margin ? INFINITY : (estimate < margin ? -INFINITY : 0.0));
  r.non_inferior = r.lower > margin;
  return r;
}

ComparisonAnalysis analyze_comparison(Method method, const AnalysisFrame& frame,
                                      const AdjustmentOptions& options, double level,
                                      std::optional<double> margin, ParticipantSet rows) {
  ComparisonAnalysis a;
  a.contrast = estimate_contrast(method, frame, options);
  a.influence = influence_values(frame, a.contrast, rows);
  a.variance = cluster_robust_variance(a.influence);
  a.level = level;
  a.ci = confidence_interval(a.contrast, a.variance, level);
  if (margin) a.noninferiority = noninferiority_test(a.contrast.value, a.variance.se, *margin, level);
  return a;
}

}  // namespace reenroll
